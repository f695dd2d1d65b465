#include "tolcal/calibrators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "tolcal/metrics.hpp"

namespace tolcal {

const char* to_string(CalibratorKind kind) {
  switch (kind) {
    case CalibratorKind::platt: return "platt";
    case CalibratorKind::beta: return "beta";
    case CalibratorKind::isotonic: return "isotonic";
    case CalibratorKind::temperature: return "temperature";
  }
  return "unknown";
}

CalibratorKind parse_calibrator_kind(std::string_view text) {
  for (auto k : {CalibratorKind::platt, CalibratorKind::beta, CalibratorKind::isotonic, CalibratorKind::temperature})
    if (text == to_string(k)) return k;
  fail(ErrorKind::invalid_input, "unknown calibrator '" + std::string(text) + "'");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double clipped_logit(double confidence, double delta) {
  const double c = std::clamp(confidence, delta, 1.0 - delta);
  return std::log(c) - std::log1p(-c);
}

namespace {

// log(1 + e^s) without overflow.
double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::fabs(s))); }

double log_clip(double c) { return std::log(std::clamp(c, kClipDelta, 1.0 - kClipDelta)); }
double log1m_clip(double c) { return std::log1p(-std::clamp(c, kClipDelta, 1.0 - kClipDelta)); }

void check_columns(std::span<const double> conf, std::span<const double> outcomes, const char* who) {
  if (conf.size() != outcomes.size()) fail(ErrorKind::invalid_input, std::string(who) + ": length mismatch");
  if (conf.empty()) fail(ErrorKind::empty_input, std::string(who) + ": no training records");
  for (std::size_t i = 0; i < conf.size(); ++i) {
    if (!std::isfinite(conf[i]) || conf[i] < 0.0 || conf[i] > 1.0)
      fail(ErrorKind::range, std::string(who) + ": confidence outside [0, 1]");
    if (outcomes[i] != 0.0 && outcomes[i] != 1.0)
      fail(ErrorKind::invalid_input, std::string(who) + ": outcomes must be 0 or 1");
  }
}

void check_two_classes(std::span<const double> conf, std::span<const double> outcomes, const char* who) {
  check_columns(conf, outcomes, who);
  if (conf.size() < 2) fail(ErrorKind::degenerate_fit, std::string(who) + ": need at least two records");
  const double hits = std::accumulate(outcomes.begin(), outcomes.end(), 0.0);
  if (hits == 0.0 || hits == static_cast<double>(outcomes.size()))
    fail(ErrorKind::degenerate_fit, std::string(who) + ": training outcomes contain a single class");
}

constexpr int kMaxParams = 3;
using Vec = std::array<double, kMaxParams>;

// Logistic regression on up to three features by damped Newton iterations
// on the mean negative log-likelihood. Coordinates flagged in `nonneg` are
// projected onto [0, inf) after every step; a coordinate pinned at zero with
// a gradient pushing it negative is held fixed for that iteration.
struct LogisticProblem {
  std::vector<Vec> rows;
  std::span<const double> outcomes;
  int p = 0;
  std::array<bool, kMaxParams> nonneg{};

  double nll(const Vec& theta) const {
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double s = 0.0;
      for (int j = 0; j < p; ++j) s += theta[j] * rows[i][j];
      total += softplus(s) - outcomes[i] * s;
    }
    return total / static_cast<double>(rows.size());
  }

  void gradient_hessian(const Vec& theta, Vec& grad, std::array<Vec, kMaxParams>& hess) const {
    grad = {};
    hess = {};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double s = 0.0;
      for (int j = 0; j < p; ++j) s += theta[j] * rows[i][j];
      const double prob = sigmoid(s);
      const double r = prob - outcomes[i];
      const double w = prob * (1.0 - prob);
      for (int j = 0; j < p; ++j) {
        grad[j] += r * rows[i][j];
        for (int k = 0; k < p; ++k) hess[j][k] += w * rows[i][j] * rows[i][k];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (int j = 0; j < p; ++j) {
      grad[j] *= inv_n;
      for (int k = 0; k < p; ++k) hess[j][k] *= inv_n;
    }
  }
};

// Solves the m x m system in place (Gaussian elimination, partial pivoting).
bool solve_small(std::array<Vec, kMaxParams> a, Vec b, int m, Vec& x) {
  for (int col = 0; col < m; ++col) {
    int pivot = col;
    for (int r = col + 1; r < m; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    if (std::fabs(a[pivot][col]) < 1e-300) return false;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (int r = col + 1; r < m; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int k = col; k < m; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  for (int r = m - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < m; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return true;
}

constexpr double kGradientTolerance = 1e-8;
constexpr int kMaxNewtonIterations = 200;

FitInfo newton_fit(const LogisticProblem& problem, Vec& theta) {
  FitInfo info;
  info.converged = false;
  double current = problem.nll(theta);
  for (int iter = 0; iter < kMaxNewtonIterations; ++iter) {
    Vec grad;
    std::array<Vec, kMaxParams> hess;
    problem.gradient_hessian(theta, grad, hess);

    std::array<int, kMaxParams> free{};
    int m = 0;
    double norm2 = 0.0;
    for (int j = 0; j < problem.p; ++j) {
      const bool pinned = problem.nonneg[j] && theta[j] <= 0.0 && grad[j] > 0.0;
      if (!pinned) {
        free[m++] = j;
        norm2 += grad[j] * grad[j];
      }
    }
    info.iterations = iter;
    info.gradient_norm = std::sqrt(norm2);
    if (info.gradient_norm < kGradientTolerance) {
      info.converged = true;
      return info;
    }

    std::array<Vec, kMaxParams> h{};
    Vec g{}, step{};
    double trace = 0.0;
    for (int a = 0; a < m; ++a) trace += hess[free[a]][free[a]];
    const double ridge = 1e-12 * std::max(trace, 1e-12);
    for (int a = 0; a < m; ++a) {
      g[a] = -grad[free[a]];
      for (int b = 0; b < m; ++b) h[a][b] = hess[free[a]][free[b]] + (a == b ? ridge : 0.0);
    }
    if (!solve_small(h, g, m, step)) {
      for (int a = 0; a < m; ++a) step[a] = g[a];
    }

    // Backtracking on the projected point. The small relative slack lets a
    // full Newton step through when the decrease is below rounding.
    bool accepted = false;
    double t = 1.0;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      Vec trial = theta;
      for (int a = 0; a < m; ++a) {
        const int j = free[a];
        trial[j] += t * step[a];
        if (problem.nonneg[j]) trial[j] = std::max(trial[j], 0.0);
      }
      const double value = problem.nll(trial);
      double decrease = 0.0;
      for (int j = 0; j < problem.p; ++j) decrease += grad[j] * (trial[j] - theta[j]);
      if (value <= current + 1e-4 * decrease + 1e-14 * std::fabs(current)) {
        theta = trial;
        current = value;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      info.converged = info.gradient_norm < 1e-6;
      return info;
    }
  }
  info.iterations = kMaxNewtonIterations;
  return info;
}

}  // namespace

CalibratorModel::CalibratorModel(Params params, FitInfo info) : params_(std::move(params)), info_(info) {
  if (const auto* beta = std::get_if<BetaParams>(&params_)) {
    if (!(beta->a >= 0.0) || !(beta->b >= 0.0))
      fail(ErrorKind::invalid_input, "beta calibrator requires a, b >= 0");
  } else if (const auto* temp = std::get_if<TemperatureParams>(&params_)) {
    if (!(temp->temperature > 0.0) || !std::isfinite(temp->temperature))
      fail(ErrorKind::invalid_input, "temperature must be positive");
  } else if (const auto* iso = std::get_if<IsotonicParams>(&params_)) {
    if (iso->knots.empty()) fail(ErrorKind::invalid_input, "isotonic calibrator needs at least one knot");
    for (std::size_t i = 1; i < iso->knots.size(); ++i) {
      if (iso->knots[i].confidence < iso->knots[i - 1].confidence ||
          iso->knots[i].calibrated < iso->knots[i - 1].calibrated)
        fail(ErrorKind::invalid_input, "isotonic knots must be sorted and nondecreasing");
    }
  }
}

CalibratorKind CalibratorModel::kind() const noexcept {
  switch (params_.index()) {
    case 0: return CalibratorKind::platt;
    case 1: return CalibratorKind::beta;
    case 2: return CalibratorKind::isotonic;
    default: return CalibratorKind::temperature;
  }
}

double CalibratorModel::calibrate(double confidence) const {
  if (const auto* p = std::get_if<PlattParams>(&params_)) return sigmoid(p->a * clipped_logit(confidence) + p->b);
  if (const auto* b = std::get_if<BetaParams>(&params_))
    return sigmoid(b->a * log_clip(confidence) - b->b * log1m_clip(confidence) + b->c);
  if (const auto* t = std::get_if<TemperatureParams>(&params_))
    return sigmoid(clipped_logit(confidence) / t->temperature);

  const auto& knots = std::get<IsotonicParams>(params_).knots;
  if (confidence <= knots.front().confidence) return knots.front().calibrated;
  if (confidence >= knots.back().confidence) return knots.back().calibrated;
  auto hi = std::upper_bound(knots.begin(), knots.end(), confidence,
                             [](double c, const IsotonicKnot& k) { return c < k.confidence; });
  auto lo = hi - 1;
  const double span = hi->confidence - lo->confidence;
  if (span <= 0.0) return hi->calibrated;
  const double w = (confidence - lo->confidence) / span;
  return std::clamp(lo->calibrated + w * (hi->calibrated - lo->calibrated), lo->calibrated, hi->calibrated);
}

std::vector<double> CalibratorModel::calibrate(std::span<const double> confidences) const {
  std::vector<double> out;
  out.reserve(confidences.size());
  for (double c : confidences) out.push_back(calibrate(c));
  return out;
}

CalibratorModel fit_platt(std::span<const double> conf, std::span<const double> outcomes) {
  check_two_classes(conf, outcomes, "fit_platt");
  LogisticProblem problem;
  problem.p = 2;
  problem.outcomes = outcomes;
  problem.rows.reserve(conf.size());
  for (double c : conf) problem.rows.push_back({clipped_logit(c), 1.0, 0.0});
  Vec theta{1.0, 0.0, 0.0};
  const auto info = newton_fit(problem, theta);
  return CalibratorModel(PlattParams{theta[0], theta[1]}, info);
}

CalibratorModel fit_beta(std::span<const double> conf, std::span<const double> outcomes) {
  check_two_classes(conf, outcomes, "fit_beta");
  LogisticProblem problem;
  problem.p = 3;
  problem.outcomes = outcomes;
  problem.nonneg = {true, true, false};
  problem.rows.reserve(conf.size());
  for (double c : conf) problem.rows.push_back({log_clip(c), -log1m_clip(c), 1.0});
  Vec theta{1.0, 1.0, 0.0};
  const auto info = newton_fit(problem, theta);
  return CalibratorModel(BetaParams{theta[0], theta[1], theta[2]}, info);
}

std::vector<double> pava(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) fail(ErrorKind::invalid_input, "pava: length mismatch");
  struct Block {
    double weighted_sum;
    double weight;
    std::size_t count;
    double mean() const { return weighted_sum / weight; }
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(weights[i] > 0.0)) fail(ErrorKind::invalid_input, "pava: weights must be positive");
    blocks.push_back({values[i] * weights[i], weights[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().weighted_sum += top.weighted_sum;
      blocks.back().weight += top.weight;
      blocks.back().count += top.count;
    }
  }
  std::vector<double> fitted;
  fitted.reserve(values.size());
  for (const auto& b : blocks) fitted.insert(fitted.end(), b.count, b.mean());
  return fitted;
}

namespace {

struct TieGroup {
  double confidence;
  double mean_outcome;
  double weight;
};

// Sorted by confidence with equal confidences pooled.
std::vector<TieGroup> tie_groups(std::span<const double> conf, std::span<const double> outcomes,
                                 std::vector<std::size_t>* order_out = nullptr) {
  std::vector<std::size_t> order(conf.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });
  std::vector<TieGroup> groups;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < order.size() && conf[order[j]] == conf[order[i]]) sum += outcomes[order[j++]];
    const double w = static_cast<double>(j - i);
    groups.push_back({conf[order[i]], sum / w, w});
    i = j;
  }
  if (order_out) *order_out = std::move(order);
  return groups;
}

}  // namespace

CalibratorModel fit_isotonic(std::span<const double> conf, std::span<const double> outcomes) {
  check_columns(conf, outcomes, "fit_isotonic");
  const auto groups = tie_groups(conf, outcomes);
  std::vector<double> y, w;
  for (const auto& g : groups) {
    y.push_back(g.mean_outcome);
    w.push_back(g.weight);
  }
  const auto fitted = pava(y, w);

  // Consecutive groups sharing a fitted value form one pooled block; its knot
  // sits at the midpoint of the block's confidence range.
  IsotonicParams params;
  for (std::size_t i = 0; i < groups.size();) {
    std::size_t j = i;
    while (j + 1 < groups.size() && fitted[j + 1] == fitted[i]) ++j;
    const double mid = 0.5 * (groups[i].confidence + groups[j].confidence);
    params.knots.push_back({mid, std::clamp(fitted[i], 0.0, 1.0)});
    i = j + 1;
  }
  return CalibratorModel(std::move(params));
}

std::vector<double> isotonic_fitted_values(std::span<const double> conf, std::span<const double> outcomes) {
  check_columns(conf, outcomes, "isotonic_fitted_values");
  std::vector<std::size_t> order;
  const auto groups = tie_groups(conf, outcomes, &order);
  std::vector<double> y, w;
  for (const auto& g : groups) {
    y.push_back(g.mean_outcome);
    w.push_back(g.weight);
  }
  const auto fitted = pava(y, w);
  std::vector<double> out(conf.size());
  std::size_t pos = 0;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t k = 0; k < static_cast<std::size_t>(groups[g].weight); ++k) out[order[pos++]] = fitted[g];
  return out;
}

CalibratorModel fit_temperature(std::span<const double> conf, std::span<const double> outcomes) {
  check_two_classes(conf, outcomes, "fit_temperature");
  std::vector<double> z;
  z.reserve(conf.size());
  for (double c : conf) z.push_back(clipped_logit(c));
  auto nll = [&](double log_t) {
    const double inv_t = std::exp(-log_t);
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double s = z[i] * inv_t;
      total += softplus(s) - outcomes[i] * s;
    }
    return total / static_cast<double>(z.size());
  };

  // Golden-section search on ln T in [-5, 5].
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -5.0, hi = 5.0;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = nll(x1), f2 = nll(x2);
  int iterations = 0;
  while (hi - lo > 1e-6) {
    ++iterations;
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = nll(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = nll(x2);
    }
  }
  FitInfo info;
  info.iterations = iterations;
  info.gradient_norm = hi - lo;
  return CalibratorModel(TemperatureParams{std::exp(0.5 * (lo + hi))}, info);
}

CalibratorModel fit_platt(const Dataset& train, const ToleranceConfig& cfg) {
  cfg.validate();
  return fit_platt(train.confidences(), tolerance_outcomes(train, cfg.epsilon));
}

CalibratorModel fit_beta(const Dataset& train, const ToleranceConfig& cfg) {
  cfg.validate();
  return fit_beta(train.confidences(), tolerance_outcomes(train, cfg.epsilon));
}

CalibratorModel fit_isotonic(const Dataset& train, const ToleranceConfig& cfg) {
  cfg.validate();
  require_non_empty(train, "fit_isotonic");
  return fit_isotonic(train.confidences(), tolerance_outcomes(train, cfg.epsilon));
}

CalibratorModel fit_temperature(const Dataset& train, const ToleranceConfig& cfg) {
  cfg.validate();
  return fit_temperature(train.confidences(), tolerance_outcomes(train, cfg.epsilon));
}

CalibratorModel fit_calibrator(CalibratorKind kind, const Dataset& train, const ToleranceConfig& cfg) {
  switch (kind) {
    case CalibratorKind::platt: return fit_platt(train, cfg);
    case CalibratorKind::beta: return fit_beta(train, cfg);
    case CalibratorKind::isotonic: return fit_isotonic(train, cfg);
    case CalibratorKind::temperature: return fit_temperature(train, cfg);
  }
  fail(ErrorKind::invalid_input, "unknown calibrator kind");
}

Dataset apply(const CalibratorModel& model, const Dataset& dataset) {
  std::vector<MeasurementRecord> records(dataset.begin(), dataset.end());
  for (auto& r : records) r.confidence = std::clamp(model.calibrate(r.confidence), 0.0, 1.0);
  return Dataset(dataset.name(), std::move(records));
}

const MethodEvaluation& CalibrationComparison::at(std::string_view method) const {
  for (const auto& m : methods)
    if (m.method == method) return m;
  fail(ErrorKind::invalid_input, "no method '" + std::string(method) + "' in comparison");
}

std::size_t CalibrationComparison::succeeded() const {
  return static_cast<std::size_t>(std::count_if(methods.begin() + (methods.empty() ? 0 : 1), methods.end(),
                                                [](const MethodEvaluation& m) { return m.ok; }));
}

CalibrationComparison compare_calibrators(const Dataset& train, const Dataset& test, const ToleranceConfig& cfg) {
  cfg.validate();
  require_non_empty(train, "compare_calibrators (train)");
  require_non_empty(test, "compare_calibrators (test)");

  const auto outcomes = tolerance_outcomes(test, cfg.epsilon);
  auto evaluate = [&](MethodEvaluation& m, const Dataset& calibrated) {
    const auto conf = calibrated.confidences();
    m.t_ece = t_ece(calibrated, cfg);
    m.brier = brier(calibrated, cfg);
    m.spread = confidence_spread(conf);
    m.nll = bernoulli_nll(conf, outcomes);
  };

  CalibrationComparison out;
  MethodEvaluation original;
  original.method = "original";
  evaluate(original, test);
  out.methods.push_back(original);

  for (auto kind : {CalibratorKind::platt, CalibratorKind::beta, CalibratorKind::isotonic, CalibratorKind::temperature}) {
    MethodEvaluation m;
    m.method = to_string(kind);
    try {
      auto model = fit_calibrator(kind, train, cfg);
      evaluate(m, apply(model, test));
      m.resolution_collapse = m.spread < kCollapseSpread && original.spread > kMinOriginalSpread;
      m.model = std::move(model);
    } catch (const Error& e) {
      m.ok = false;
      m.error = e.what();
    }
    out.methods.push_back(std::move(m));
  }
  return out;
}

}  // namespace tolcal
