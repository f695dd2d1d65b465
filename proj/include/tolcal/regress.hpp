#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tolcal/core.hpp"

namespace tolcal {

struct RegressionResult {
  double beta = 0.0;
  double intercept = 0.0;
  double se_beta = 0.0;
  double t_stat = 0.0;  // +/-inf when the fit is exact
  double r_squared = 0.0;
  std::size_t n = 0;
};

struct DailyStance {
  std::string group_key;
  double stance = 0.0;  // (hawk - dove) / total
  std::size_t hawk = 0;
  std::size_t dove = 0;
  std::size_t n_sentences = 0;
};

// Records with confidence >= threshold, order preserved.
Dataset confidence_filter(const Dataset& dataset, double threshold);

// Per group_key in order of first appearance: hawk = y_pred > 50,
// dove = y_pred < 50, exact 50s count only toward the total.
std::vector<DailyStance> daily_stance(const Dataset& dataset);

// Simple OLS y = intercept + beta * x with plain standard errors.
RegressionResult ols(std::span<const double> x, std::span<const double> y);

// Residuals y - (intercept + beta * x).
std::vector<double> ols_residuals(const RegressionResult& fit, std::span<const double> x, std::span<const double> y);

struct JoinedSeries {
  std::vector<std::string> keys;
  std::vector<double> covariate;
  std::vector<double> stance;
  std::vector<std::string> unmatched;  // stance groups with no covariate
};

JoinedSeries join_covariate(const std::vector<DailyStance>& stances, const std::map<std::string, double>& covariate);

// daily_stance -> join -> ols; throws insufficient_data below 3 matched days.
RegressionResult stance_regression(const Dataset& dataset, const std::map<std::string, double>& covariate,
                                   std::vector<std::string>* unmatched = nullptr);

// Knobs of the simulated stance-vs-covariate study.
struct AttenuationParams {
  double covariate_effect = 10.0;     // score points per unit covariate
  double sentence_sd = 20.0;          // spread of true sentence stances within a day
  double model_noise_sd = 20.0;       // measurement noise of the model scores
  double neutral_confidence = 0.97;   // stated confidence at score 50
  double confidence_slope = 0.01;     // confidence lost per point of extremity
  double confidence_jitter = 0.02;
};

struct AttenuationResult {
  RegressionResult truth;
  RegressionResult unfiltered;
  RegressionResult filtered;
  double model_t_ece = 0.0;  // calibration of the simulated model measurements
  std::size_t sentences = 0;
  std::size_t kept_sentences = 0;
  Dataset sentences_data;                // y_true = human label, y_pred = model score
  std::map<std::string, double> covariate;
};

// Simulates a daily covariate, sentence stances driven by it, noisy model
// scores and confidences that rise toward neutral scores, then runs the
// truth / unfiltered / filtered regressions.
AttenuationResult attenuation_experiment(std::uint64_t seed, std::size_t n_days, std::size_t sentences_per_day,
                                         double filter_threshold, const ToleranceConfig& tol,
                                         const AttenuationParams& params = {});

}  // namespace tolcal
