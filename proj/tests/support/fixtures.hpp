#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tolcal/core.hpp"

namespace fixture {

inline tolcal::MeasurementRecord record(std::string id, double y_true, double y_pred, double conf) {
  tolcal::MeasurementRecord r;
  r.id = std::move(id);
  r.y_true = y_true;
  r.y_pred = y_pred;
  r.confidence = conf;
  return r;
}

// Records whose tolerance outcome (eps = 10) equals outcomes[i].
inline tolcal::Dataset from_outcomes(const std::vector<double>& conf, const std::vector<double>& outcomes,
                                     std::string name = "fixture") {
  std::vector<tolcal::MeasurementRecord> recs;
  for (std::size_t i = 0; i < conf.size(); ++i)
    recs.push_back(record("r" + std::to_string(i), 50, outcomes[i] > 0.5 ? 52 : 75, conf[i]));
  return tolcal::Dataset(std::move(name), std::move(recs));
}

// conf ~ U(lo, hi) and correctness ~ Bernoulli(g(conf)).
inline tolcal::Dataset bernoulli(std::size_t n, std::uint64_t seed, double lo, double hi,
                                 const std::function<double(double)>& g) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi), v(0, 1);
  std::vector<double> conf(n), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    conf[i] = u(rng);
    out[i] = v(rng) < g(conf[i]) ? 1.0 : 0.0;
  }
  return from_outcomes(conf, out);
}

}  // namespace fixture
