#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tolcal/core.hpp"

namespace tolcal {

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;     // 0 when count == 0
  double tolerance_accuracy = 0.0;  // 0 when count == 0
};

struct MetricReport {
  double t_ece = 0.0;
  double brier = 0.0;
  std::optional<double> mh;  // empty when the rank correlation is undefined
  std::string mh_error;      // why mh is empty
  std::vector<ReliabilityBin> bins;
  std::size_t n = 0;
};

// M equal-width bins; bin m covers ((m-1)/M, m/M] and the first bin also holds 0.
std::vector<ReliabilityBin> reliability_bins(const Dataset& dataset, const ToleranceConfig& cfg);

// Sum over non-empty bins of |B_m|/n * |acc_eps(B_m) - conf(B_m)|.
double t_ece(const Dataset& dataset, const ToleranceConfig& cfg);
double t_ece(std::span<const ReliabilityBin> bins);

// Mean of (conf_i - o_i)^2 with o_i the tolerance-correctness indicator.
double brier(const Dataset& dataset, const ToleranceConfig& cfg);

// Average ranks (1-based); tied values share the mean of their rank span.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

// Spearman correlation as the Pearson correlation of average ranks. Throws
// invalid_input on length mismatch or n < 2 and undefined_correlation when
// either list is constant.
double mh_spearman(std::span<const double> y_pred, std::span<const double> y_true);

MetricReport metric_report(const Dataset& dataset, const ToleranceConfig& cfg);

// Population standard deviation of the confidences.
double confidence_spread(std::span<const double> confidences);

// Mean Bernoulli negative log-likelihood of confidences against outcomes,
// with confidences clipped to [delta, 1 - delta].
double bernoulli_nll(std::span<const double> confidences, std::span<const double> outcomes,
                     double delta = 1e-6);

}  // namespace tolcal
