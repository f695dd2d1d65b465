#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tolcal/core.hpp"

namespace tolcal {

// Confidences are clipped to [kClipDelta, 1 - kClipDelta] before any logit.
inline constexpr double kClipDelta = 1e-6;

// Spread below which a calibrated confidence distribution counts as collapsed.
inline constexpr double kCollapseSpread = 0.05;
// ... provided the uncalibrated confidences were spread wider than this.
inline constexpr double kMinOriginalSpread = 0.15;

enum class CalibratorKind { platt, beta, isotonic, temperature };

const char* to_string(CalibratorKind kind);
CalibratorKind parse_calibrator_kind(std::string_view text);

// sigmoid(a * logit(c) + b)
struct PlattParams {
  double a = 1.0;
  double b = 0.0;
  bool operator==(const PlattParams&) const = default;
};

// sigmoid(a * ln c - b * ln(1 - c) + c0), a, b >= 0
struct BetaParams {
  double a = 1.0;
  double b = 1.0;
  double c = 0.0;
  bool operator==(const BetaParams&) const = default;
};

struct IsotonicKnot {
  double confidence = 0.0;
  double calibrated = 0.0;
  bool operator==(const IsotonicKnot&) const = default;
};

// Knots sorted by confidence with nondecreasing calibrated values.
struct IsotonicParams {
  std::vector<IsotonicKnot> knots;
  bool operator==(const IsotonicParams&) const = default;
};

// sigmoid(logit(c) / t)
struct TemperatureParams {
  double temperature = 1.0;
  bool operator==(const TemperatureParams&) const = default;
};

struct FitInfo {
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = true;
  bool operator==(const FitInfo&) const = default;
};

class CalibratorModel {
 public:
  using Params = std::variant<PlattParams, BetaParams, IsotonicParams, TemperatureParams>;

  explicit CalibratorModel(Params params, FitInfo info = {});

  CalibratorKind kind() const noexcept;
  const Params& params() const noexcept { return params_; }
  const FitInfo& fit_info() const noexcept { return info_; }

  double calibrate(double confidence) const;
  std::vector<double> calibrate(std::span<const double> confidences) const;

  bool operator==(const CalibratorModel&) const = default;

 private:
  Params params_;
  FitInfo info_;
};

double sigmoid(double x);
double clipped_logit(double confidence, double delta = kClipDelta);

CalibratorModel fit_platt(const Dataset& train, const ToleranceConfig& cfg);
CalibratorModel fit_beta(const Dataset& train, const ToleranceConfig& cfg);
CalibratorModel fit_isotonic(const Dataset& train, const ToleranceConfig& cfg);
CalibratorModel fit_temperature(const Dataset& train, const ToleranceConfig& cfg);
CalibratorModel fit_calibrator(CalibratorKind kind, const Dataset& train, const ToleranceConfig& cfg);

// Fitters on raw (confidence, outcome) columns; outcomes must be 0 or 1.
CalibratorModel fit_platt(std::span<const double> conf, std::span<const double> outcomes);
CalibratorModel fit_beta(std::span<const double> conf, std::span<const double> outcomes);
CalibratorModel fit_isotonic(std::span<const double> conf, std::span<const double> outcomes);
CalibratorModel fit_temperature(std::span<const double> conf, std::span<const double> outcomes);

// Weighted pool-adjacent-violators: the nondecreasing sequence minimizing
// sum w_i (f_i - y_i)^2. Returns the fitted value for every input position.
std::vector<double> pava(std::span<const double> values, std::span<const double> weights);

// Isotonic in-sample fit: the pooled block value at every training point, in
// input order.
std::vector<double> isotonic_fitted_values(std::span<const double> conf, std::span<const double> outcomes);

// Confidences replaced by calibrated values; everything else untouched.
Dataset apply(const CalibratorModel& model, const Dataset& dataset);

struct MethodEvaluation {
  std::string method;  // "original" or a calibrator kind
  bool ok = true;
  std::string error;
  double t_ece = 0.0;
  double brier = 0.0;
  double spread = 0.0;
  double nll = 0.0;
  bool resolution_collapse = false;
  std::optional<CalibratorModel> model;
};

struct CalibrationComparison {
  // "original" first, then platt, beta, isotonic, temperature.
  std::vector<MethodEvaluation> methods;

  const MethodEvaluation& at(std::string_view method) const;
  std::size_t succeeded() const;
};

CalibrationComparison compare_calibrators(const Dataset& train, const Dataset& test, const ToleranceConfig& cfg);

}  // namespace tolcal
