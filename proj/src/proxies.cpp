#include "tolcal/proxies.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tolcal {

const char* to_string(ProxyMethod method) {
  switch (method) {
    case ProxyMethod::verbal: return "verbal";
    case ProxyMethod::resampling: return "resampling";
    case ProxyMethod::logit_geom: return "logit_geom";
    case ProxyMethod::p_true: return "p_true";
  }
  return "unknown";
}

ProxyMethod parse_proxy_method(std::string_view text) {
  for (auto m : {ProxyMethod::verbal, ProxyMethod::resampling, ProxyMethod::logit_geom, ProxyMethod::p_true})
    if (text == to_string(m)) return m;
  fail(ErrorKind::invalid_input, "unknown proxy method '" + std::string(text) + "'");
}

ProxyOutput resampling_confidence(std::span<const double> samples, double epsilon) {
  if (samples.empty()) fail(ErrorKind::empty_input, "resampling_confidence: no samples");
  if (!std::isfinite(epsilon) || epsilon <= 0.0)
    fail(ErrorKind::invalid_input, "resampling_confidence: epsilon must be positive");
  for (double s : samples)
    if (!std::isfinite(s)) fail(ErrorKind::invalid_input, "resampling_confidence: non-finite sample");

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());

  std::size_t best_begin = 0, best_end = 0;
  std::size_t begin = 0;
  while (begin < sorted.size()) {
    const double upper = sorted[begin] + 2.0 * epsilon;
    const auto end = static_cast<std::size_t>(std::upper_bound(sorted.begin() + begin, sorted.end(), upper) -
                                              sorted.begin());
    if (end - begin > best_end - best_begin) {
      best_begin = begin;
      best_end = end;
    }
    // Equal anchors give the same window.
    const double anchor = sorted[begin];
    while (begin < sorted.size() && sorted[begin] == anchor) ++begin;
  }

  double sum = 0.0;
  for (std::size_t i = best_begin; i < best_end; ++i) sum += sorted[i];
  const double count = static_cast<double>(best_end - best_begin);
  ProxyOutput out;
  out.method = ProxyMethod::resampling;
  out.confidence = count / static_cast<double>(sorted.size());
  out.measurement = std::clamp(sum / count, sorted[best_begin], sorted[best_end - 1]);
  return out;
}

double logit_geometric_mean(std::span<const double> token_probs) {
  if (token_probs.empty()) fail(ErrorKind::empty_input, "logit_geometric_mean: no token probabilities");
  double log_sum = 0.0;
  double lo = 1.0, hi = 0.0;
  for (double p : token_probs) {
    if (!std::isfinite(p) || p <= 0.0 || p > 1.0)
      fail(ErrorKind::range, "logit_geometric_mean: invalid probability " + format_number(p));
    log_sum += std::log(p);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  return std::clamp(std::exp(log_sum / static_cast<double>(token_probs.size())), lo, hi);
}

double p_true_confidence(double logit_true, double logit_false) {
  if (!std::isfinite(logit_true) || !std::isfinite(logit_false))
    fail(ErrorKind::invalid_input, "p_true_confidence: non-finite logit");
  const double d = logit_true - logit_false;
  // Branch on sign so exp never overflows.
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

Dataset attach_proxy(const Dataset& dataset, ProxyMethod method, const ToleranceConfig& cfg) {
  cfg.validate();
  if (method == ProxyMethod::verbal) return dataset;

  std::vector<std::string> missing;
  for (const auto& r : dataset) {
    bool ok = true;
    switch (method) {
      case ProxyMethod::resampling: ok = r.samples && !r.samples->empty(); break;
      case ProxyMethod::logit_geom: ok = r.token_probs && !r.token_probs->empty(); break;
      case ProxyMethod::p_true: ok = r.logit_true && r.logit_false; break;
      case ProxyMethod::verbal: break;
    }
    if (!ok) missing.push_back(r.id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < missing.size(); ++i) ids += (i ? ", " : "") + missing[i];
    fail(ErrorKind::missing_evidence, std::string("proxy '") + to_string(method) + "' lacks evidence for ids: " + ids);
  }

  std::vector<MeasurementRecord> records(dataset.begin(), dataset.end());
  for (auto& r : records) {
    switch (method) {
      case ProxyMethod::resampling: {
        const auto out = resampling_confidence(*r.samples, cfg.epsilon);
        r.confidence = out.confidence;
        r.y_pred = out.measurement;
        break;
      }
      case ProxyMethod::logit_geom: r.confidence = logit_geometric_mean(*r.token_probs); break;
      case ProxyMethod::p_true: r.confidence = p_true_confidence(*r.logit_true, *r.logit_false); break;
      case ProxyMethod::verbal: break;
    }
  }
  return Dataset(dataset.name(), std::move(records));
}

}  // namespace tolcal
