#pragma once

// Data-parallel inner loops. Each kernel has a scalar reference in
// kernels::scalar and, on x86-64, an AVX2+FMA variant in kernels::avx2.
// The unqualified entry points dispatch on the CPU at first use.
//
// Element-wise kernels (tolerance_mask, bin_indices, axpy without FMA
// contraction) are bit-identical across variants. Reductions (dot,
// squared_error_sum) reassociate the sum and agree to within a few ulps of
// the sum of absolute terms.

#include <cstdint>
#include <span>

namespace tolcal::kernels {

enum class Isa { scalar, avx2 };

const char* to_string(Isa isa);

// The variant the dispatcher picked for this process.
Isa active_isa();
bool isa_available(Isa isa);
// Overrides dispatch, e.g. to run a test against the scalar path. Throws when
// the requested variant is unavailable on this CPU or build.
void force_isa(Isa isa);

// out[i] = |pred[i] - truth[i]| <= epsilon ? 1.0 : 0.0
void tolerance_mask(std::span<const double> pred, std::span<const double> truth, double epsilon,
                    std::span<double> out);

// Right-closed bins over [0, 1]: out[i] = clamp(ceil(conf[i] * bins) - 1, 0, bins - 1).
void bin_indices(std::span<const double> conf, int bins, std::span<std::int32_t> out);

// sum_i (a[i] - b[i])^2
double squared_error_sum(std::span<const double> a, std::span<const double> b);

// sum_i a[i] * b[i]
double dot(std::span<const double> a, std::span<const double> b);

// y[i] += alpha * x[i]
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace scalar {
void tolerance_mask(std::span<const double> pred, std::span<const double> truth, double epsilon,
                    std::span<double> out);
void bin_indices(std::span<const double> conf, int bins, std::span<std::int32_t> out);
double squared_error_sum(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
}  // namespace scalar

#if defined(TOLCAL_HAVE_AVX2)
namespace avx2 {
void tolerance_mask(std::span<const double> pred, std::span<const double> truth, double epsilon,
                    std::span<double> out);
void bin_indices(std::span<const double> conf, int bins, std::span<std::int32_t> out);
double squared_error_sum(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
}  // namespace avx2
#endif

}  // namespace tolcal::kernels
