#include "tolcal/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>

#include "tolcal/calibrators.hpp"

namespace tolcal {

void MiscalibrationProfile::validate() const {
  auto bad = [&](const char* why) {
    fail(ErrorKind::invalid_input, "invalid profile " + name() + ": " + why);
  };
  if (!std::isfinite(parameter)) bad("parameter is not finite");
  switch (kind) {
    case Kind::identity: break;
    case Kind::overconfident_power:
      if (!(parameter > 1.0)) bad("overconfident power needs gamma > 1");
      break;
    case Kind::underconfident_power:
      if (!(parameter > 0.0 && parameter < 1.0)) bad("underconfident power needs 0 < gamma < 1");
      break;
    case Kind::base_rate:
      if (!(parameter >= 0.0 && parameter <= 1.0)) bad("base rate must lie in [0, 1]");
      break;
    case Kind::temperature:
      if (!(parameter > 0.0)) bad("temperature must be positive");
      break;
  }
}

double MiscalibrationProfile::correctness_probability(double c) const {
  switch (kind) {
    case Kind::identity: return c;
    case Kind::overconfident_power:
    case Kind::underconfident_power: return std::pow(c, parameter);
    case Kind::base_rate: return parameter;
    case Kind::temperature: return sigmoid(clipped_logit(c) / parameter);
  }
  return c;
}

std::string MiscalibrationProfile::name() const {
  switch (kind) {
    case Kind::identity: return "identity";
    case Kind::overconfident_power: return "overconfident:" + format_number(parameter);
    case Kind::underconfident_power: return "underconfident:" + format_number(parameter);
    case Kind::base_rate: return "base_rate:" + format_number(parameter);
    case Kind::temperature: return "temperature:" + format_number(parameter);
  }
  return "unknown";
}

MiscalibrationProfile parse_profile(std::string_view text) {
  const auto colon = text.find(':');
  const auto head = text.substr(0, colon);
  double value = 0.0;
  const bool has_value = colon != std::string_view::npos;
  if (has_value) {
    const auto tail = text.substr(colon + 1);
    auto res = std::from_chars(tail.data(), tail.data() + tail.size(), value);
    if (res.ec != std::errc() || res.ptr != tail.data() + tail.size())
      fail(ErrorKind::invalid_input, "invalid profile parameter in '" + std::string(text) + "'");
  }
  auto need = [&](double fallback) { return has_value ? value : fallback; };
  MiscalibrationProfile profile;
  if (head == "identity") profile = MiscalibrationProfile::identity();
  else if (head == "overconfident") profile = MiscalibrationProfile::overconfident(need(2.0));
  else if (head == "underconfident") profile = MiscalibrationProfile::underconfident(need(0.5));
  else if (head == "base_rate") profile = MiscalibrationProfile::base_rate(need(0.3));
  else if (head == "temperature") profile = MiscalibrationProfile::temperature(need(2.0));
  else fail(ErrorKind::invalid_input, "unknown profile '" + std::string(text) + "'");
  profile.validate();
  return profile;
}

namespace {

std::string record_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06zu", i);
  return buf;
}

// y_pred for a drawn outcome. The draw is repeated on the rare rounding case
// that lands on the wrong side of the tolerance boundary.
double place_prediction(double y_true, double epsilon, bool correct, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    double y_pred;
    if (correct) {
      const double lo = std::max(0.0, y_true - epsilon);
      const double hi = std::min(kScaleMax, y_true + epsilon);
      y_pred = lo + unit(rng) * (hi - lo);
    } else {
      const double left = std::max(0.0, y_true - epsilon);
      const double right = std::max(0.0, kScaleMax - (y_true + epsilon));
      const double u = unit(rng) * (left + right);
      y_pred = u < left ? u : y_true + epsilon + (u - left);
    }
    y_pred = std::clamp(y_pred, 0.0, kScaleMax);
    if ((std::fabs(y_pred - y_true) <= epsilon) == correct) return y_pred;
  }
}

}  // namespace

Dataset generate(const MiscalibrationProfile& profile, std::size_t n, double epsilon, std::uint64_t seed) {
  profile.validate();
  if (n == 0) fail(ErrorKind::invalid_input, "generate: n must be positive");
  if (!std::isfinite(epsilon) || epsilon <= 0.0)
    fail(ErrorKind::invalid_input, "generate: epsilon must be positive");
  // Every y_true needs an out-of-tolerance region.
  if (2.0 * epsilon >= kScaleMax) fail(ErrorKind::invalid_input, "generate: epsilon too large for the score scale");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> conf_dist(0.01, 0.99);
  std::uniform_real_distribution<double> score_dist(0.0, kScaleMax);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<MeasurementRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    MeasurementRecord r;
    r.id = record_id(i);
    r.confidence = conf_dist(rng);
    r.y_true = score_dist(rng);
    const double g = profile.correctness_probability(r.confidence);
    if (!(g >= 0.0 && g <= 1.0)) fail(ErrorKind::invalid_input, "invalid profile: g(c) outside [0, 1]");
    const bool correct = unit(rng) < g;
    r.y_pred = place_prediction(r.y_true, epsilon, correct, rng);
    records.push_back(std::move(r));
  }
  return Dataset(profile.name(), std::move(records));
}

DistillScenario parse_distill_scenario(std::string_view text) {
  if (text == "uninformative_teacher") return DistillScenario::uninformative_teacher;
  if (text == "calibrated_teacher") return DistillScenario::calibrated_teacher;
  fail(ErrorKind::invalid_input, "unknown distillation scenario '" + std::string(text) + "'");
}

const char* to_string(DistillScenario scenario) {
  return scenario == DistillScenario::uninformative_teacher ? "uninformative_teacher" : "calibrated_teacher";
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

DistillData generate_distill(DistillScenario scenario, std::size_t n, double epsilon, std::uint64_t seed) {
  if (n == 0) fail(ErrorKind::invalid_input, "generate_distill: n must be positive");
  if (!std::isfinite(epsilon) || epsilon <= 0.0)
    fail(ErrorKind::invalid_input, "generate_distill: epsilon must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> score(0.0, kScaleMax);
  std::normal_distribution<double> normal(0.0, 1.0);

  DistillData out;
  std::vector<MeasurementRecord> records;
  records.reserve(n);
  out.features.reserve(n);
  constexpr int kClasses = 10;
  constexpr int kRadialFeatures = 20;
  constexpr double kRadialWidth = 3.0;

  for (std::size_t i = 0; i < n; ++i) {
    MeasurementRecord r;
    r.id = record_id(i);
    std::vector<double> x;
    if (scenario == DistillScenario::uninformative_teacher) {
      r.y_true = score(rng);
      r.y_pred = std::round(score(rng));
      r.confidence = 0.5;
      // Radial encoding of y_true on a 5-point grid, plus noise.
      for (int c = 0; c < kRadialFeatures; ++c) {
        const double z = (r.y_true - (5.0 * c + 2.5)) / kRadialWidth;
        x.push_back(std::exp(-0.5 * z * z) + 0.05 * normal(rng));
      }
    } else {
      std::uniform_int_distribution<int> cls(0, kClasses - 1);
      std::bernoulli_distribution noisy(0.5);
      const int j = cls(rng);
      const bool wide = noisy(rng);
      const double sd = wide ? 15.0 : 4.0;
      const double centre = 10.0 * j + 5.0;
      r.y_true = std::clamp(centre + sd * normal(rng), 0.0, kScaleMax);
      r.y_pred = centre;
      // Exact within-tolerance probability; clamping makes a side always
      // correct when the band reaches the scale edge.
      const double lo = centre - epsilon > 0.0 ? normal_cdf(-epsilon / sd) : 0.0;
      const double hi = centre + epsilon < kScaleMax ? normal_cdf(epsilon / sd) : 1.0;
      r.confidence = std::clamp(hi - lo, 0.0, 1.0);
      x.assign(2 * kClasses, 0.0);
      x[static_cast<std::size_t>(j + (wide ? kClasses : 0))] = 1.0;
    }
    records.push_back(std::move(r));
    out.features.push_back(std::move(x));
  }
  out.dataset = Dataset(to_string(scenario), std::move(records));
  return out;
}

}  // namespace tolcal
