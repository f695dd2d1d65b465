#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "tolcal/distill.hpp"
#include "tolcal/synth.hpp"

using namespace tolcal;

namespace {

std::vector<std::vector<double>> random_features(std::size_t n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0, 1);
  std::vector<std::vector<double>> x(n, std::vector<double>(static_cast<std::size_t>(d)));
  for (auto& row : x)
    for (auto& v : row) v = normal(rng);
  return x;
}

SoftTarget random_target(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1);
  SoftTarget t;
  for (int j = 0; j < k; ++j) t.probs.push_back(u(rng));
  const double s = std::accumulate(t.probs.begin(), t.probs.end(), 0.0);
  for (auto& p : t.probs) p /= s;
  return t;
}

// Plain cross-entropy minibatch descent, mirroring the documented schedule.
std::vector<double> cross_entropy_trajectory(const std::vector<std::vector<double>>& x, const std::vector<int>& label,
                                             int k, const TrainConfig& cfg) {
  const int d = static_cast<int>(x.front().size());
  std::vector<double> w(static_cast<std::size_t>(k * (d + 1)), 0.0);
  auto probs = [&](const std::vector<double>& row) {
    std::vector<double> z(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      double s = w[static_cast<std::size_t>(j * (d + 1) + d)];
      for (int i = 0; i < d; ++i) s += w[static_cast<std::size_t>(j * (d + 1) + i)] * row[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(j)] = s / cfg.temperature;
    }
    const double m = *std::max_element(z.begin(), z.end());
    double total = 0;
    for (auto& v : z) total += v = std::exp(v - m);
    for (auto& v : z) v /= total;
    return z;
  };
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> losses;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<double> g(w.size(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const auto& row = x[order[b]];
        const auto p = probs(row);
        for (int j = 0; j < k; ++j) {
          const double r = (p[static_cast<std::size_t>(j)] - (j == label[order[b]] ? 1.0 : 0.0)) /
                           cfg.temperature / static_cast<double>(stop - start);
          for (int i = 0; i < d; ++i) g[static_cast<std::size_t>(j * (d + 1) + i)] += r * row[static_cast<std::size_t>(i)];
          g[static_cast<std::size_t>(j * (d + 1) + d)] += r;
        }
      }
      double norm = 0;
      for (double v : g) norm += v * v;
      norm = std::sqrt(norm);
      const double clip = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * clip * g[i];
    }
    double loss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) loss -= std::log(probs(x[i])[static_cast<std::size_t>(label[i])]);
    losses.push_back(loss / static_cast<double>(x.size()));
  }
  return losses;
}

}  // namespace

TEST_CASE("score_to_class") {
  CHECK(score_to_class(55, 10) == 5);
  CHECK(score_to_class(100, 10) == 9);
  CHECK(score_to_class(0, 10) == 0);
  CHECK(score_to_class(55, 11) == 6);
  CHECK(score_to_class(54.9, 11) == 5);
  CHECK(score_to_class(100, 11) == 10);
  CHECK(score_to_class(33, 3) == 0);
  CHECK_THROWS_AS(score_to_class(101, 10), Error);
  CHECK_THROWS_AS(score_to_class(-1, 10), Error);
  CHECK_THROWS_AS(score_to_class(50, 1), Error);
  CHECK(class_center(5, 10) == 55);
  CHECK(class_center(6, 11) == 60);
}

TEST_CASE("soft_target examples") {
  auto t = soft_target(55, 0.9, 10);
  REQUIRE(t.k() == 10);
  for (int j = 0; j < 10; ++j) CHECK(t.probs[static_cast<std::size_t>(j)] == doctest::Approx(j == 5 ? 0.9 : 0.1 / 9).epsilon(1e-15));
  t = soft_target(55, 1.0, 10);
  for (int j = 0; j < 10; ++j) CHECK(t.probs[static_cast<std::size_t>(j)] == (j == 5 ? 1.0 : 0.0));
  t = soft_target(55, 0.0, 10);
  for (int j = 0; j < 10; ++j) CHECK(t.probs[static_cast<std::size_t>(j)] == doctest::Approx(j == 5 ? 0.0 : 1.0 / 9).epsilon(1e-15));
  CHECK_THROWS_AS(soft_target(55, 1.1, 10), Error);
  CHECK_THROWS_AS(soft_target(120, 0.5, 10), Error);
}

TEST_CASE("soft_target invariants") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> y(0, 100), c(0, 1);
  for (int i = 0; i < 2000; ++i) {
    const int k = 2 + i % 12;
    const double yp = y(rng), conf = c(rng);
    const auto t = soft_target(yp, conf, k);
    CHECK(std::accumulate(t.probs.begin(), t.probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*std::min_element(t.probs.begin(), t.probs.end()) >= 0.0);
    if (conf > 1.0 / k)
      CHECK(std::max_element(t.probs.begin(), t.probs.end()) - t.probs.begin() == score_to_class(yp, k));
  }
}

TEST_CASE("kl_soft_loss") {
  SoftTarget t{{0.9, 0.1}};
  const std::vector<double> half{0.5, 0.5};
  CHECK(kl_soft_loss(half, t) == doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-14));
  CHECK(std::fabs(kl_soft_loss(half, t) - 0.3680) < 1e-4);
  CHECK(kl_soft_loss(t.probs, t) == 0.0);
  const std::vector<double> s{0.2, 0.3, 0.5};
  CHECK(kl_soft_loss(s, SoftTarget{{0, 1, 0}}) == doctest::Approx(-std::log(0.3)).epsilon(1e-15));
  CHECK_THROWS_AS(kl_soft_loss(std::vector<double>{1.0, 0.0}, t), Error);
  CHECK_THROWS_AS(kl_soft_loss(std::vector<double>{0.2, 0.3, 0.5}, t), Error);

  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_target(5, rng), b = random_target(5, rng);
    CHECK(kl_soft_loss(b.probs, a) > 0.0);
    CHECK(kl_soft_loss(a.probs, a) == doctest::Approx(0.0));
  }
}

TEST_CASE("softmax") {
  const std::vector<double> z{1000, 1000, 1000};
  for (double p : softmax(z)) CHECK(p == doctest::Approx(1.0 / 3));
  const std::vector<double> two{std::log(3.0), 0};
  CHECK(softmax(two)[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(softmax(two, 2.0)[0] == doctest::Approx(std::sqrt(3.0) / (std::sqrt(3.0) + 1)).epsilon(1e-15));
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = trial == 0 ? 3 : 2 + trial % 5, d = trial == 0 ? 2 : 1 + trial % 4;
    const auto x = random_features(12, d, rng);
    std::vector<SoftTarget> t;
    for (int i = 0; i < 12; ++i) t.push_back(random_target(k, rng));
    StudentModel m(k, d);
    for (auto& w : m.weights) w = normal(rng);
    const double temperature = trial % 3 == 0 ? 1.0 : 0.5 + 0.25 * (trial % 4);
    const auto g = student_gradient(m, x, t, temperature);
    double worst = 0;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
      const double h = 1e-5;
      auto up = m, down = m;
      up.weights[i] += h;
      down.weights[i] -= h;
      const double fd = (student_loss(up, x, t, temperature) - student_loss(down, x, t, temperature)) / (2 * h);
      worst = std::max(worst, std::fabs(fd - g[i]) / std::max(std::fabs(fd), 1e-6));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("one-hot targets reproduce cross-entropy training") {
  std::mt19937_64 rng(4);
  const int k = 4, d = 3;
  const auto x = random_features(100, d, rng);
  std::vector<int> label;
  std::vector<SoftTarget> t;
  for (const auto& row : x) {
    const int j = (row[0] > 0 ? 1 : 0) + (row[1] > 0 ? 2 : 0);
    label.push_back(j);
    SoftTarget s{std::vector<double>(k, 0.0)};
    s.probs[static_cast<std::size_t>(j)] = 1.0;
    t.push_back(s);
  }
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.learning_rate = 0.3;
  cfg.seed = 9;
  const auto got = train_student(x, t, cfg).epoch_loss;
  const auto want = cross_entropy_trajectory(x, label, k, cfg);
  REQUIRE(got.size() == want.size());
  for (std::size_t e = 0; e < got.size(); ++e) CHECK(std::fabs(got[e] - want[e]) < 1e-9);
}

TEST_CASE("separable two-class data is learned") {
  std::mt19937_64 rng(5);
  auto x = random_features(200, 2, rng);
  std::vector<SoftTarget> t;
  for (auto& row : x) {
    row[0] += row[0] > 0 ? 1.0 : -1.0;
    t.push_back(SoftTarget{row[0] > 0 ? std::vector<double>{0, 1} : std::vector<double>{1, 0}});
  }
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  const StudentModel zero(2, 2);
  const double initial = student_loss(zero, x, t, 1.0);
  const auto trained = train_student(x, t, cfg);
  REQUIRE(trained.epoch_loss.size() == 30);
  CHECK(trained.epoch_loss.back() < initial);
  std::size_t right = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = student_predict(trained.model, x[i]).probs;
    right += (p[1] > p[0]) == (t[i].probs[1] == 1.0);
  }
  CHECK(right == x.size());
}

TEST_CASE("training is bit-reproducible and validates input") {
  std::mt19937_64 rng(6);
  const auto x = random_features(64, 3, rng);
  std::vector<SoftTarget> t;
  for (int i = 0; i < 64; ++i) t.push_back(random_target(3, rng));
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 42;
  const auto a = train_student(x, t, cfg), b = train_student(x, t, cfg);
  CHECK(a.model == b.model);
  CHECK(a.epoch_loss == b.epoch_loss);
  cfg.seed = 43;
  CHECK_FALSE(train_student(x, t, cfg).model == a.model);

  auto ragged = x;
  ragged[3].pop_back();
  CHECK_THROWS_AS(train_student(ragged, t, cfg), Error);
  CHECK_THROWS_AS(train_student(x, std::span<const SoftTarget>(t).first(10), cfg), Error);
  auto mixed = t;
  mixed[0] = random_target(4, rng);
  CHECK_THROWS_AS(train_student(x, mixed, cfg), Error);
  cfg.batch_size = 100;
  CHECK_THROWS_AS(train_student(x, t, cfg), Error);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  for (auto mutate : std::vector<void (*)(TrainConfig&)>{
           [](TrainConfig& c) { c.epochs = 0; }, [](TrainConfig& c) { c.learning_rate = 0; },
           [](TrainConfig& c) { c.batch_size = 0; }, [](TrainConfig& c) { c.temperature = -1; },
           [](TrainConfig& c) { c.grad_clip = 0; }, [](TrainConfig& c) { c.split_fraction = 1.0; },
           [](TrainConfig& c) { c.split_fraction = 0.0; }}) {
    TrainConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}

TEST_CASE("student_predict") {
  const StudentModel zero(10, 3);
  const std::vector<double> f{0.3, -1, 2};
  auto p = student_predict(zero, f);
  CHECK(p.confidence == doctest::Approx(0.1));
  for (double v : p.probs) CHECK(v == doctest::Approx(0.1));

  StudentModel strong(10, 3);
  strong.row(5).back() = 50.0;
  p = student_predict(strong, f);
  CHECK(p.y_pred == 55.0);
  CHECK(p.confidence > 1 - 1e-12);

  StudentModel fomc(11, 3);
  fomc.row(6).back() = 5.0;
  CHECK(student_predict(fomc, f).y_pred == 60.0);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0, 3);
  for (int i = 0; i < 300; ++i) {
    const int k = 2 + i % 11;
    StudentModel m(k, 4);
    for (auto& w : m.weights) w = normal(rng);
    const auto x = random_features(1, 4, rng)[0];
    const auto out = student_predict(m, x);
    CHECK(std::accumulate(out.probs.begin(), out.probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.confidence >= 1.0 / k - 1e-15);
    CHECK(out.confidence <= 1.0);
  }
  CHECK_THROWS_AS(student_predict(zero, std::vector<double>{1, 2}), Error);
}

TEST_CASE("default class count") {
  CHECK(default_class_count("fomc") == 11);
  CHECK(default_class_count("FOMC") == 11);
  CHECK(default_class_count("ideology") == 10);
  CHECK(default_class_count("uninformative_teacher") == 10);
}

TEST_CASE("student beats a constant-confidence teacher with random scores") {
  const auto data = generate_distill(DistillScenario::uninformative_teacher, 1000, 10, 11);
  TrainConfig cfg;
  cfg.seed = 11;
  const auto rep = distill_pipeline(data.dataset, data.features, 0, cfg, ToleranceConfig{});
  CHECK(rep.k == 10);
  CHECK(rep.n_train == 800);
  CHECK(rep.n_eval == 200);
  CHECK(rep.student.t_ece <= rep.teacher.t_ece);
  CHECK(rep.delta_t_ece == doctest::Approx(rep.student.t_ece - rep.teacher.t_ece));
  CHECK(rep.epoch_loss.size() == 30);
}

TEST_CASE("student tracks a calibrated teacher") {
  const auto data = generate_distill(DistillScenario::calibrated_teacher, 2000, 10, 12);
  TrainConfig cfg;
  cfg.seed = 12;
  cfg.learning_rate = 0.5;
  const auto rep = distill_pipeline(data.dataset, data.features, 10, cfg, ToleranceConfig{});
  CHECK(std::fabs(rep.student.t_ece - rep.teacher.t_ece) <= 0.05);
}

TEST_CASE("distill_pipeline checks alignment and is deterministic") {
  const auto data = generate_distill(DistillScenario::uninformative_teacher, 200, 10, 13);
  TrainConfig cfg;
  cfg.epochs = 3;
  auto short_features = data.features;
  short_features.pop_back();
  CHECK_THROWS_AS(distill_pipeline(data.dataset, short_features, 10, cfg, ToleranceConfig{}), Error);
  const auto a = distill_pipeline(data.dataset, data.features, 10, cfg, ToleranceConfig{});
  const auto b = distill_pipeline(data.dataset, data.features, 10, cfg, ToleranceConfig{});
  CHECK(a.model == b.model);
  CHECK(a.student.t_ece == b.student.t_ece);
}
