#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "tolcal/errors.hpp"
#include "tolcal/kernels.hpp"

using namespace tolcal;
namespace k = tolcal::kernels;

namespace {

std::vector<double> uniform(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double abs_sum(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] * b[i]);
  return s;
}

// Lengths around the vector widths and unroll factors.
const std::size_t kLengths[] = {0, 1, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 1000, 1003};

}  // namespace

TEST_CASE("scalar reference semantics") {
  std::vector<double> pred{50, 50, 50, 0}, truth{55, 60, 61, 100}, out(4);
  k::scalar::tolerance_mask(pred, truth, 10, out);
  CHECK(out == std::vector<double>{1, 1, 0, 0});

  std::vector<double> conf{0.0, 0.05, 0.1, 0.1000001, 0.3, 0.8, 0.99, 1.0};
  std::vector<std::int32_t> idx(conf.size());
  k::scalar::bin_indices(conf, 10, idx);
  CHECK(idx == std::vector<std::int32_t>{0, 0, 0, 1, 2, 7, 9, 9});

  std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  CHECK(k::scalar::dot(a, b) == 32);
  CHECK(k::scalar::squared_error_sum(a, b) == 27);
  k::scalar::axpy(2, a, b);
  CHECK(b == std::vector<double>{6, 9, 12});
}

TEST_CASE("bin edges m/M land in bin m for many M") {
  for (int m = 1; m <= 50; ++m) {
    std::vector<double> conf;
    std::vector<std::int32_t> expect;
    for (int j = 1; j <= m; ++j) {
      conf.push_back(static_cast<double>(j) / m);
      expect.push_back(j - 1);
      conf.push_back(std::nextafter(static_cast<double>(j) / m, 2.0));
      expect.push_back(std::min(j, m - 1));
    }
    std::vector<std::int32_t> got(conf.size());
    k::scalar::bin_indices(conf, m, got);
    CHECK(got == expect);
#if defined(TOLCAL_HAVE_AVX2)
    if (k::isa_available(k::Isa::avx2)) {
      k::avx2::bin_indices(conf, m, got);
      CHECK(got == expect);
    }
#endif
  }
}

TEST_CASE("dispatch reports and overrides the variant") {
  CHECK(k::isa_available(k::Isa::scalar));
  const auto original = k::active_isa();
  k::force_isa(k::Isa::scalar);
  CHECK(k::active_isa() == k::Isa::scalar);
  if (k::isa_available(k::Isa::avx2)) {
    k::force_isa(k::Isa::avx2);
    CHECK(k::active_isa() == k::Isa::avx2);
  } else {
    CHECK_THROWS_AS(k::force_isa(k::Isa::avx2), Error);
  }
  k::force_isa(original);
}

TEST_CASE("dispatch validates lengths") {
  std::vector<double> a(3), b(4);
  std::vector<std::int32_t> idx(2);
  CHECK_THROWS_AS(k::dot(a, b), Error);
  CHECK_THROWS_AS(k::squared_error_sum(a, b), Error);
  CHECK_THROWS_AS(k::axpy(1, a, b), Error);
  CHECK_THROWS_AS(k::tolerance_mask(a, a, 1, b), Error);
  CHECK_THROWS_AS(k::bin_indices(a, 10, idx), Error);
  CHECK_THROWS_AS(k::bin_indices(a, 0, std::span<std::int32_t>()), Error);
}

#if defined(TOLCAL_HAVE_AVX2)
TEST_CASE("AVX2 variants match the scalar reference") {
  if (!k::isa_available(k::Isa::avx2)) {
    MESSAGE("AVX2 unavailable on this CPU; equivalence not exercised");
    return;
  }
  for (std::size_t n : kLengths) {
    CAPTURE(n);
    const auto a = uniform(n, -50, 150, 1 + n);
    const auto b = uniform(n, 0, 100, 2 + n);
    const auto conf = uniform(n, 0, 1, 3 + n);

    std::vector<double> m1(n), m2(n);
    k::scalar::tolerance_mask(a, b, 10, m1);
    k::avx2::tolerance_mask(a, b, 10, m2);
    CHECK(m1 == m2);

    // Exact boundaries: pred = truth +/- eps.
    std::vector<double> edge(n);
    for (std::size_t i = 0; i < n; ++i) edge[i] = b[i] + (i % 2 ? 10.0 : -10.0);
    k::scalar::tolerance_mask(edge, b, 10, m1);
    k::avx2::tolerance_mask(edge, b, 10, m2);
    CHECK(m1 == m2);

    for (int bins : {1, 3, 10, 15, 100}) {
      std::vector<std::int32_t> i1(n), i2(n);
      k::scalar::bin_indices(conf, bins, i1);
      k::avx2::bin_indices(conf, bins, i2);
      CHECK(i1 == i2);
    }

    const double d1 = k::scalar::dot(a, b), d2 = k::avx2::dot(a, b);
    CHECK(std::fabs(d1 - d2) <= 1e-13 * (abs_sum(a, b) + 1));
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
    const double s1 = k::scalar::squared_error_sum(a, b), s2 = k::avx2::squared_error_sum(a, b);
    CHECK(std::fabs(s1 - s2) <= 1e-13 * (abs_sum(diff, diff) + 1));

    auto y1 = b, y2 = b;
    k::scalar::axpy(-0.37, a, y1);
    k::avx2::axpy(-0.37, a, y2);
    CHECK(y1 == y2);
  }
}

TEST_CASE("AVX2 handles unaligned subspans") {
  if (!k::isa_available(k::Isa::avx2)) return;
  const auto a = uniform(101, 0, 1, 7);
  const auto b = uniform(101, 0, 1, 8);
  for (std::size_t off = 0; off < 4; ++off) {
    std::span<const double> sa(a.data() + off, 90), sb(b.data() + off, 90);
    CHECK(std::fabs(k::scalar::dot(sa, sb) - k::avx2::dot(sa, sb)) < 1e-12);
    std::vector<std::int32_t> i1(90), i2(90);
    k::scalar::bin_indices(sa, 10, i1);
    k::avx2::bin_indices(sa, 10, i2);
    CHECK(i1 == i2);
  }
}
#endif
