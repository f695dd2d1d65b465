// Built with -mavx2 -mfma -ffp-contract=off; only reached after the
// dispatcher has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "tolcal/kernels.hpp"

namespace tolcal::kernels::avx2 {

namespace {

inline __m256d abs_pd(__m256d v) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  return _mm256_andnot_pd(sign, v);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

}  // namespace

void tolerance_mask(std::span<const double> pred, std::span<const double> truth, double epsilon,
                    std::span<double> out) {
  const std::size_t n = out.size();
  const __m256d eps = _mm256_set1_pd(epsilon);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(pred.data() + i), _mm256_loadu_pd(truth.data() + i));
    __m256d ok = _mm256_cmp_pd(abs_pd(diff), eps, _CMP_LE_OQ);
    _mm256_storeu_pd(out.data() + i, _mm256_and_pd(ok, one));
  }
  for (; i < n; ++i) out[i] = std::fabs(pred[i] - truth[i]) <= epsilon ? 1.0 : 0.0;
}

void bin_indices(std::span<const double> conf, int bins, std::span<std::int32_t> out) {
  const std::size_t n = out.size();
  const double m = static_cast<double>(bins);
  const __m256d vm = _mm256_set1_pd(m);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d top = _mm256_set1_pd(m - 1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d idx = _mm256_sub_pd(_mm256_ceil_pd(_mm256_mul_pd(_mm256_loadu_pd(conf.data() + i), vm)), one);
    idx = _mm256_min_pd(_mm256_max_pd(idx, zero), top);
    const __m256d c = _mm256_loadu_pd(conf.data() + i);
    const __m256d down = _mm256_and_pd(_mm256_cmp_pd(idx, zero, _CMP_GT_OQ),
                                       _mm256_cmp_pd(c, _mm256_div_pd(idx, vm), _CMP_LE_OQ));
    const __m256d up = _mm256_and_pd(_mm256_cmp_pd(idx, top, _CMP_LT_OQ),
                                     _mm256_cmp_pd(c, _mm256_div_pd(_mm256_add_pd(idx, one), vm), _CMP_GT_OQ));
    idx = _mm256_sub_pd(idx, _mm256_and_pd(down, one));
    idx = _mm256_add_pd(idx, _mm256_andnot_pd(down, _mm256_and_pd(up, one)));
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out.data() + i), _mm256_cvttpd_epi32(idx));
  }
  scalar::bin_indices(conf.subspan(i), bins, out.subspan(i));
}

double squared_error_sum(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i));
    __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a.data() + i + 4), _mm256_loadu_pd(b.data() + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i));
    acc0 = _mm256_fmadd_pd(d, d, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i + 4), _mm256_loadu_pd(b.data() + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = y.size();
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  // mul + add rather than fmadd keeps results identical to the scalar path.
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x.data() + i));
    _mm256_storeu_pd(y.data() + i, _mm256_add_pd(_mm256_loadu_pd(y.data() + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace tolcal::kernels::avx2
