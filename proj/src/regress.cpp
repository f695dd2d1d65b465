#include "tolcal/regress.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include "tolcal/kernels.hpp"
#include "tolcal/metrics.hpp"

namespace tolcal {

Dataset confidence_filter(const Dataset& dataset, double threshold) {
  if (!std::isfinite(threshold) || threshold < 0.0 || threshold > 1.0)
    fail(ErrorKind::invalid_input, "confidence threshold must lie in [0, 1]");
  std::vector<MeasurementRecord> kept;
  for (const auto& r : dataset)
    if (r.confidence >= threshold) kept.push_back(r);
  return Dataset(dataset.name(), std::move(kept));
}

std::vector<DailyStance> daily_stance(const Dataset& dataset) {
  std::vector<DailyStance> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : dataset) {
    if (!r.group_key) fail(ErrorKind::invalid_input, "record '" + r.id + "' has no group_key");
    auto [it, inserted] = index.try_emplace(*r.group_key, out.size());
    if (inserted) out.push_back(DailyStance{*r.group_key});
    auto& day = out[it->second];
    ++day.n_sentences;
    if (r.y_pred > 50.0) ++day.hawk;
    else if (r.y_pred < 50.0) ++day.dove;
  }
  for (auto& day : out)
    day.stance = (static_cast<double>(day.hawk) - static_cast<double>(day.dove)) / static_cast<double>(day.n_sentences);
  return out;
}

RegressionResult ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::invalid_input, "ols: x and y differ in length");
  if (x.size() < 3) fail(ErrorKind::insufficient_data, "ols: need at least 3 observations");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  std::vector<double> dx(x.size()), dy(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx[i] = x[i] - mx;
    dy[i] = y[i] - my;
  }
  const double sxx = kernels::dot(dx, dx);
  if (!(sxx > 0.0)) fail(ErrorKind::degenerate_fit, "ols: regressor has zero variance");
  const double sxy = kernels::dot(dx, dy);
  const double sst = kernels::dot(dy, dy);

  RegressionResult fit;
  fit.n = x.size();
  fit.beta = sxy / sxx;
  fit.intercept = my - fit.beta * mx;
  const auto residuals = ols_residuals(fit, x, y);
  const double ssr = kernels::dot(residuals, residuals);
  fit.r_squared = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 0.0;
  fit.se_beta = std::sqrt(ssr / (n - 2.0)) / std::sqrt(sxx);
  if (fit.se_beta > 0.0) fit.t_stat = fit.beta / fit.se_beta;
  else if (fit.beta != 0.0) fit.t_stat = std::copysign(std::numeric_limits<double>::infinity(), fit.beta);
  return fit;
}

std::vector<double> ols_residuals(const RegressionResult& fit, std::span<const double> x, std::span<const double> y) {
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) e[i] = y[i] - (fit.intercept + fit.beta * x[i]);
  return e;
}

JoinedSeries join_covariate(const std::vector<DailyStance>& stances, const std::map<std::string, double>& covariate) {
  JoinedSeries out;
  for (const auto& day : stances) {
    auto it = covariate.find(day.group_key);
    if (it == covariate.end()) {
      out.unmatched.push_back(day.group_key);
      continue;
    }
    out.keys.push_back(day.group_key);
    out.covariate.push_back(it->second);
    out.stance.push_back(day.stance);
  }
  return out;
}

RegressionResult stance_regression(const Dataset& dataset, const std::map<std::string, double>& covariate,
                                   std::vector<std::string>* unmatched) {
  const auto joined = join_covariate(daily_stance(dataset), covariate);
  if (unmatched) *unmatched = joined.unmatched;
  if (joined.keys.size() < 3)
    fail(ErrorKind::insufficient_data,
         "only " + std::to_string(joined.keys.size()) + " days matched the covariate; need at least 3");
  return ols(joined.covariate, joined.stance);
}

AttenuationResult attenuation_experiment(std::uint64_t seed, std::size_t n_days, std::size_t sentences_per_day,
                                         double filter_threshold, const ToleranceConfig& tol,
                                         const AttenuationParams& params) {
  tol.validate();
  if (n_days == 0 || sentences_per_day == 0)
    fail(ErrorKind::invalid_input, "attenuation_experiment: n_days and sentences_per_day must be positive");
  if (!(filter_threshold >= 0.0 && filter_threshold <= 1.0))
    fail(ErrorKind::invalid_input, "attenuation_experiment: threshold must lie in [0, 1]");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto score = [](double v) { return std::round(std::clamp(v, 0.0, kScaleMax)); };

  AttenuationResult result;
  std::vector<MeasurementRecord> records;
  records.reserve(n_days * sentences_per_day);
  for (std::size_t d = 0; d < n_days; ++d) {
    char key[32];
    std::snprintf(key, sizeof(key), "day%04zu", d);
    const double x = normal(rng);
    result.covariate[key] = x;
    for (std::size_t s = 0; s < sentences_per_day; ++s) {
      MeasurementRecord r;
      char id[48];
      std::snprintf(id, sizeof(id), "%s-%03zu", key, s);
      r.id = id;
      r.group_key = key;
      r.y_true = score(50.0 + params.covariate_effect * x + params.sentence_sd * normal(rng));
      r.y_pred = score(r.y_true + params.model_noise_sd * normal(rng));
      // Miscalibrated: confidence peaks on near-neutral scores.
      const double conf = params.neutral_confidence - params.confidence_slope * std::fabs(r.y_pred - 50.0) +
                          params.confidence_jitter * normal(rng);
      r.confidence = std::round(100.0 * std::clamp(conf, 0.0, 1.0)) / 100.0;
      records.push_back(std::move(r));
    }
  }
  result.sentences_data = Dataset("attenuation", std::move(records));
  result.sentences = result.sentences_data.size();

  std::vector<MeasurementRecord> human(result.sentences_data.begin(), result.sentences_data.end());
  for (auto& r : human) r.y_pred = r.y_true;
  const Dataset truth("attenuation-truth", std::move(human));
  const Dataset kept = confidence_filter(result.sentences_data, filter_threshold);
  result.kept_sentences = kept.size();

  result.truth = stance_regression(truth, result.covariate);
  result.unfiltered = stance_regression(result.sentences_data, result.covariate);
  result.filtered = stance_regression(kept, result.covariate);
  result.model_t_ece = t_ece(result.sentences_data, tol);
  return result;
}

}  // namespace tolcal
