#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "tolcal/metrics.hpp"
#include "tolcal/synth.hpp"

using namespace tolcal;

namespace {

MeasurementRecord rec(std::string id, double y_true, double y_pred, double conf) {
  MeasurementRecord r;
  r.id = std::move(id);
  r.y_true = y_true;
  r.y_pred = y_pred;
  r.confidence = conf;
  return r;
}

// conf ~ U(0,1), correctness ~ Bernoulli(conf).
Dataset calibrated(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<MeasurementRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = u(rng);
    const bool ok = u(rng) < c;
    recs.push_back(rec("r" + std::to_string(i), 50, ok ? 55 : 80, c));
  }
  return Dataset("cal", recs);
}

// Independent oracle: bins by explicit interval membership.
double oracle_tece(const Dataset& d, double eps, int m) {
  std::vector<double> cnt(m), sc(m), so(m);
  for (const auto& r : d) {
    int b = -1;
    for (int j = 0; j < m; ++j) {
      const double lo = static_cast<double>(j) / m, hi = static_cast<double>(j + 1) / m;
      if ((r.confidence > lo || (j == 0 && r.confidence == 0)) && r.confidence <= hi) {
        b = j;
        break;
      }
    }
    REQUIRE(b >= 0);
    cnt[b] += 1;
    sc[b] += r.confidence;
    so[b] += std::fabs(r.y_pred - r.y_true) <= eps ? 1 : 0;
  }
  double e = 0;
  for (int j = 0; j < m; ++j)
    if (cnt[j] > 0) e += cnt[j] / d.size() * std::fabs(so[j] / cnt[j] - sc[j] / cnt[j]);
  return e;
}

// Brute-force average rank: 1 + #smaller + (#equal - 1) / 2.
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, eq = 0;
    for (double w : v) {
      less += w < v[i];
      eq += w == v[i];
    }
    r[i] = 1 + less + (eq - 1) / 2;
  }
  return r;
}

double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("all confidences 1.0 fill only the top bin") {
  const Dataset d("d", {rec("a", 50, 50, 1.0), rec("b", 50, 90, 1.0)});
  const auto bins = reliability_bins(d, {});
  REQUIRE(bins.size() == 10);
  for (int i = 0; i < 9; ++i) CHECK(bins[i].count == 0);
  CHECK(bins[9].count == 2);
  CHECK(bins[9].mean_confidence == 1.0);
  CHECK(bins[9].lower == doctest::Approx(0.9));
  CHECK(bins[9].upper == 1.0);
}

TEST_CASE("two records at 0.8: hand binning") {
  const Dataset d("d", {rec("a", 50, 55, 0.8), rec("b", 50, 70, 0.8)});
  const auto bins = reliability_bins(d, {});
  CHECK(bins[7].count == 2);
  CHECK(bins[7].tolerance_accuracy == 0.5);
  CHECK(bins[7].mean_confidence == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(std::fabs(t_ece(d, {}) - 0.3) < 1e-12);
  CHECK(std::fabs(brier(d, {}) - 0.34) < 1e-12);
}

TEST_CASE("confidence 0 lands in bin 1 and exact edges are right-closed") {
  const Dataset d("d", {rec("a", 0, 0, 0.0), rec("b", 0, 0, 0.1), rec("c", 0, 0, 0.3), rec("d", 0, 0, 0.7)});
  const auto bins = reliability_bins(d, {});
  CHECK(bins[0].count == 2);
  CHECK(bins[2].count == 1);
  CHECK(bins[6].count == 1);
}

TEST_CASE("uniform confidences spread evenly over bins (binomial 5 sigma)") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<MeasurementRecord> recs;
  for (int i = 0; i < 1000; ++i) recs.push_back(rec("r" + std::to_string(i), 50, 50, u(rng)));
  const auto bins = reliability_bins(Dataset("u", recs), {});
  const double sigma = std::sqrt(1000 * 0.1 * 0.9);
  std::size_t total = 0;
  for (const auto& b : bins) {
    CHECK(std::fabs(static_cast<double>(b.count) - 100.0) <= 5 * sigma);
    total += b.count;
  }
  CHECK(total == 1000);
}

TEST_CASE("T-ECE examples and oracle") {
  const Dataset perfect("p", {rec("a", 1, 1, 1.0), rec("b", 2, 3, 1.0)});
  CHECK(t_ece(perfect, {}) == 0.0);
  const auto cal = calibrated(100000, 4);
  CHECK(t_ece(cal, {}) < 0.01);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = generate(MiscalibrationProfile::overconfident(2), 3000, 10, seed);
    for (int m : {1, 7, 10, 20}) {
      ToleranceConfig cfg;
      cfg.num_bins = m;
      CHECK(t_ece(d, cfg) == doctest::Approx(oracle_tece(d, 10, m)).epsilon(1e-12));
    }
  }
}

TEST_CASE("T-ECE is zero iff every bin matches exactly") {
  // Bin 5 at conf 0.5 with half correct, bin 10 at 1.0 all correct.
  const Dataset d("z", {rec("a", 0, 0, 0.5), rec("b", 0, 50, 0.5), rec("c", 0, 5, 1.0)});
  CHECK(t_ece(d, {}) == 0.0);
  const Dataset e("z", {rec("a", 0, 0, 0.5), rec("b", 0, 50, 0.5), rec("c", 0, 50, 1.0)});
  CHECK(t_ece(e, {}) > 0.0);
}

TEST_CASE("Brier examples, fold vs loop, permutation invariance") {
  CHECK(brier(Dataset("a", {rec("a", 1, 1, 1.0)}), {}) == 0.0);
  CHECK(brier(Dataset("a", {rec("a", 1, 50, 0.7)}), {}) == doctest::Approx(0.49).epsilon(1e-15));

  auto d = generate(MiscalibrationProfile::underconfident(0.5), 5000, 10, 2);
  double loop = 0;
  for (const auto& r : d) {
    const double o = tolerance_correct(r.y_pred, r.y_true, 10);
    loop += (r.confidence - o) * (r.confidence - o);
  }
  loop /= d.size();
  CHECK(brier(d, {}) == doctest::Approx(loop).epsilon(1e-12));

  auto recs = d.records();
  std::shuffle(recs.begin(), recs.end(), std::mt19937_64(3));
  CHECK(brier(Dataset("s", recs), {}) == doctest::Approx(brier(d, {})).epsilon(1e-12));
}

TEST_CASE("metrics reject empty input") {
  const Dataset empty;
  CHECK_THROWS_AS(reliability_bins(empty, {}), Error);
  CHECK_THROWS_AS(t_ece(empty, {}), Error);
  CHECK_THROWS_AS(brier(empty, {}), Error);
  try {
    t_ece(empty, {});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::empty_input);
  }
}

TEST_CASE("Spearman examples") {
  const std::vector<double> a{3, 1, 4, 1.5, 9, 2.6};
  CHECK(mh_spearman(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> up{1, 2, 3, 4, 5}, down{5, 4, 3, 2, 1};
  CHECK(mh_spearman(up, down) == doctest::Approx(-1.0).epsilon(1e-15));

  const std::vector<double> x{10, 20, 20, 40}, y{1, 2, 3, 4};
  CHECK(brute_ranks(x) == std::vector<double>{1, 2.5, 2.5, 4});
  CHECK(mh_spearman(x, y) == doctest::Approx(brute_pearson(brute_ranks(x), brute_ranks(y))).epsilon(1e-14));
}

TEST_CASE("Spearman errors") {
  const std::vector<double> c{5, 5, 5}, v{1, 2, 3}, w{1, 2};
  CHECK_THROWS_AS(mh_spearman(c, v), Error);
  try {
    mh_spearman(c, v);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::undefined_correlation);
  }
  try {
    mh_spearman(v, w);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_input);
  }
}

TEST_CASE("Spearman properties on random data") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 100);
  std::uniform_int_distribution<int> small(0, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 40;
    std::vector<double> x(n), y(n), tx(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
    }
    // No ties: d-squared formula.
    const auto rx = brute_ranks(x), ry = brute_ranks(y);
    double d2 = 0;
    for (std::size_t i = 0; i < n; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    const double nn = static_cast<double>(n);
    CHECK(std::fabs(mh_spearman(x, y) - (1 - 6 * d2 / (nn * (nn * nn - 1)))) < 1e-12);
    // Strictly increasing transform.
    for (std::size_t i = 0; i < n; ++i) tx[i] = std::exp(x[i] / 20) - 7;
    CHECK(std::fabs(mh_spearman(tx, y) - mh_spearman(x, y)) < 1e-12);

    // Ties: brute-force average-rank oracle.
    std::vector<double> tx2(n), ty2(n);
    for (std::size_t i = 0; i < n; ++i) {
      tx2[i] = small(rng);
      ty2[i] = small(rng);
    }
    if (std::adjacent_find(tx2.begin(), tx2.end(), std::not_equal_to<>()) == tx2.end()) continue;
    if (std::adjacent_find(ty2.begin(), ty2.end(), std::not_equal_to<>()) == ty2.end()) continue;
    const double got = mh_spearman(tx2, ty2);
    CHECK(got == doctest::Approx(brute_pearson(brute_ranks(tx2), brute_ranks(ty2))).epsilon(1e-12));
    CHECK(got >= -1.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("average_ranks handles ties") {
  const std::vector<double> v{3, 1, 3, 3, 0};
  CHECK(average_ranks(v) == std::vector<double>{4, 2, 4, 4, 1});
}

TEST_CASE("metric_report bundles consistent values") {
  SUBCASE("calibrated generator") {
    const auto d = calibrated(100000, 12);
    const auto rep = metric_report(d, {});
    CHECK(rep.t_ece < 0.01);
    // E[c(1 - c)] for c ~ U(0, 1) is 1/6.
    CHECK(std::fabs(rep.brier - 1.0 / 6.0) < 0.005);
    std::size_t total = 0;
    for (const auto& b : rep.bins) total += b.count;
    CHECK(total == rep.n);
    CHECK(rep.n == 100000);
  }
  SUBCASE("one record") {
    const auto rep = metric_report(Dataset("one", {rec("a", 1, 2, 0.4)}), {});
    CHECK(rep.n == 1);
    CHECK_FALSE(rep.mh.has_value());
    CHECK_FALSE(rep.mh_error.empty());
  }
  SUBCASE("perfect predictions") {
    const auto d = generate(MiscalibrationProfile::identity(), 500, 10, 1);
    std::vector<MeasurementRecord> recs = d.records();
    for (auto& r : recs) r.y_pred = r.y_true;
    const auto rep = metric_report(Dataset("p", recs), {});
    REQUIRE(rep.mh);
    CHECK(*rep.mh == doctest::Approx(1.0));
    for (const auto& b : rep.bins)
      if (b.count) CHECK(b.tolerance_accuracy == 1.0);
  }
}

TEST_CASE("T-ECE and Brier stay within [0, 1]") {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<MeasurementRecord> recs;
    for (int i = 0; i < 1 + t * 3; ++i) recs.push_back(rec("r" + std::to_string(i), 100 * u(rng), 100 * u(rng), u(rng)));
    const Dataset d("r", recs);
    const double e = t_ece(d, {}), b = brier(d, {});
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
  }
}

TEST_CASE("confidence_spread and bernoulli_nll") {
  const std::vector<double> c{0.2, 0.4, 0.6, 0.8}, o{0, 0, 1, 1};
  CHECK(confidence_spread(c) == doctest::Approx(std::sqrt(0.05)));
  const double expect = -(std::log(0.8) + std::log(0.6) + std::log(0.6) + std::log(0.8)) / 4;
  CHECK(bernoulli_nll(c, o) == doctest::Approx(expect));
  const std::vector<double> extreme{0.0, 1.0}, wrong{1, 0};
  CHECK(std::isfinite(bernoulli_nll(extreme, wrong)));
}
