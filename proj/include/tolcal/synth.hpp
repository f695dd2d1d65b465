#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tolcal/core.hpp"

namespace tolcal {

// Maps a stated confidence c to the probability g(c) that the prediction
// falls within tolerance.
struct MiscalibrationProfile {
  enum class Kind {
    identity,              // g(c) = c
    overconfident_power,   // g(c) = c^gamma, gamma > 1
    underconfident_power,  // g(c) = c^gamma, 0 < gamma < 1
    base_rate,             // g(c) = p
    temperature,           // g(c) = sigmoid(logit(c) / tau), tau > 0
  };

  Kind kind = Kind::identity;
  double parameter = 1.0;

  static MiscalibrationProfile identity() { return {Kind::identity, 1.0}; }
  static MiscalibrationProfile overconfident(double gamma) { return {Kind::overconfident_power, gamma}; }
  static MiscalibrationProfile underconfident(double gamma) { return {Kind::underconfident_power, gamma}; }
  static MiscalibrationProfile base_rate(double p) { return {Kind::base_rate, p}; }
  static MiscalibrationProfile temperature(double tau) { return {Kind::temperature, tau}; }

  // Throws invalid_input ("invalid profile") when the parameter is out of range.
  void validate() const;
  double correctness_probability(double confidence) const;
  std::string name() const;
};

// "identity", "overconfident:2", "underconfident:0.5", "base_rate:0.3", "temperature:2".
MiscalibrationProfile parse_profile(std::string_view text);

// Synthetic dataset with conf ~ U(0.01, 0.99), y_true ~ U(0, 100), and
// y_pred inside the tolerance band with probability g(conf), outside it
// otherwise. Deterministic per seed.
Dataset generate(const MiscalibrationProfile& profile, std::size_t n, double epsilon, std::uint64_t seed);

// Teacher/feature scenarios for the distillation pipeline.
enum class DistillScenario {
  // Teacher confidence fixed at 0.5 and teacher scores drawn independently of
  // the text; features encode y_true.
  uninformative_teacher,
  // Teacher predicts the class centre of the latent score with a confidence
  // equal to its true within-tolerance probability, which differs between
  // two feature-visible noise regimes.
  calibrated_teacher,
};

DistillScenario parse_distill_scenario(std::string_view text);
const char* to_string(DistillScenario scenario);

struct DistillData {
  Dataset dataset;
  std::vector<std::vector<double>> features;  // aligned with dataset records
};

DistillData generate_distill(DistillScenario scenario, std::size_t n, double epsilon, std::uint64_t seed);

}  // namespace tolcal
