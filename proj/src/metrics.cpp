#include "tolcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tolcal/kernels.hpp"

namespace tolcal {

std::vector<ReliabilityBin> reliability_bins(const Dataset& dataset, const ToleranceConfig& cfg) {
  cfg.validate();
  require_non_empty(dataset, "reliability_bins");

  const auto m = static_cast<std::size_t>(cfg.num_bins);
  const auto conf = dataset.confidences();
  const auto outcomes = tolerance_outcomes(dataset, cfg.epsilon);
  std::vector<std::int32_t> index(conf.size());
  kernels::bin_indices(conf, cfg.num_bins, index);

  std::vector<double> conf_sum(m, 0.0), hit_sum(m, 0.0);
  std::vector<ReliabilityBin> bins(m);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const auto b = static_cast<std::size_t>(index[i]);
    conf_sum[b] += conf[i];
    hit_sum[b] += outcomes[i];
    ++bins[b].count;
  }
  for (std::size_t b = 0; b < m; ++b) {
    bins[b].lower = static_cast<double>(b) / static_cast<double>(m);
    bins[b].upper = static_cast<double>(b + 1) / static_cast<double>(m);
    if (bins[b].count > 0) {
      const double c = static_cast<double>(bins[b].count);
      bins[b].mean_confidence = conf_sum[b] / c;
      bins[b].tolerance_accuracy = hit_sum[b] / c;
    }
  }
  return bins;
}

double t_ece(std::span<const ReliabilityBin> bins) {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  if (n == 0) fail(ErrorKind::empty_input, "t_ece: no samples in bins");
  double total = 0.0;
  for (const auto& b : bins) {
    if (b.count == 0) continue;
    total += static_cast<double>(b.count) / static_cast<double>(n) *
             std::fabs(b.tolerance_accuracy - b.mean_confidence);
  }
  return total;
}

double t_ece(const Dataset& dataset, const ToleranceConfig& cfg) {
  const auto bins = reliability_bins(dataset, cfg);
  return t_ece(bins);
}

double brier(const Dataset& dataset, const ToleranceConfig& cfg) {
  cfg.validate();
  require_non_empty(dataset, "brier");
  const auto conf = dataset.confidences();
  const auto outcomes = tolerance_outcomes(dataset, cfg.epsilon);
  return kernels::squared_error_sum(conf, outcomes) / static_cast<double>(conf.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share ranks i+1..j+1.
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::invalid_input, "pearson: length mismatch");
  if (x.size() < 2) fail(ErrorKind::invalid_input, "pearson: need at least two observations");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::undefined_correlation, "pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double mh_spearman(std::span<const double> y_pred, std::span<const double> y_true) {
  if (y_pred.size() != y_true.size())
    fail(ErrorKind::invalid_input, "mh_spearman: lists differ in length (" + std::to_string(y_pred.size()) +
                                       " vs " + std::to_string(y_true.size()) + ")");
  if (y_pred.size() < 2) fail(ErrorKind::invalid_input, "mh_spearman: need at least two observations");
  auto distinct = [](std::span<const double> v) {
    return std::any_of(v.begin(), v.end(), [&](double x) { return x != v.front(); });
  };
  if (!distinct(y_pred) || !distinct(y_true))
    fail(ErrorKind::undefined_correlation, "mh_spearman: a list is constant");
  const auto rp = average_ranks(y_pred);
  const auto rt = average_ranks(y_true);
  return pearson(rp, rt);
}

MetricReport metric_report(const Dataset& dataset, const ToleranceConfig& cfg) {
  MetricReport report;
  report.bins = reliability_bins(dataset, cfg);
  report.t_ece = t_ece(report.bins);
  report.brier = brier(dataset, cfg);
  report.n = dataset.size();
  try {
    const auto pred = dataset.predictions();
    const auto truth = dataset.truths();
    report.mh = mh_spearman(pred, truth);
  } catch (const Error& e) {
    report.mh_error = e.what();
  }
  return report;
}

double confidence_spread(std::span<const double> confidences) {
  if (confidences.empty()) return 0.0;
  const double n = static_cast<double>(confidences.size());
  const double mean = std::accumulate(confidences.begin(), confidences.end(), 0.0) / n;
  double ss = 0.0;
  for (double c : confidences) ss += (c - mean) * (c - mean);
  return std::sqrt(ss / n);
}

double bernoulli_nll(std::span<const double> confidences, std::span<const double> outcomes, double delta) {
  if (confidences.size() != outcomes.size()) fail(ErrorKind::invalid_input, "bernoulli_nll: length mismatch");
  if (confidences.empty()) fail(ErrorKind::empty_input, "bernoulli_nll: no samples");
  double total = 0.0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = std::clamp(confidences[i], delta, 1.0 - delta);
    total -= outcomes[i] * std::log(c) + (1.0 - outcomes[i]) * std::log1p(-c);
  }
  return total / static_cast<double>(confidences.size());
}

}  // namespace tolcal
