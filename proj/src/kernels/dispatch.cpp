#include <atomic>
#include <cstdlib>
#include <string_view>

#include "tolcal/errors.hpp"
#include "tolcal/kernels.hpp"

namespace tolcal::kernels {

namespace {

Isa detect() {
  // TOLCAL_FORCE_SCALAR=1 pins the reference path for a whole process.
  if (const char* env = std::getenv("TOLCAL_FORCE_SCALAR"); env && std::string_view(env) == "1")
    return Isa::scalar;
  return isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

const char* to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) {
  if (isa == Isa::scalar) return true;
#if defined(TOLCAL_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_available(isa))
    fail(ErrorKind::invalid_input, std::string("kernel variant '") + to_string(isa) + "' is not available");
  current().store(isa, std::memory_order_relaxed);
}

#if defined(TOLCAL_HAVE_AVX2)
#define TOLCAL_DISPATCH(fn, ...) \
  return active_isa() == Isa::avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__)
#else
#define TOLCAL_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void tolerance_mask(std::span<const double> pred, std::span<const double> truth, double epsilon,
                    std::span<double> out) {
  if (pred.size() != out.size() || truth.size() != out.size())
    fail(ErrorKind::invalid_input, "tolerance_mask: length mismatch");
  TOLCAL_DISPATCH(tolerance_mask, pred, truth, epsilon, out);
}

void bin_indices(std::span<const double> conf, int bins, std::span<std::int32_t> out) {
  if (conf.size() != out.size()) fail(ErrorKind::invalid_input, "bin_indices: length mismatch");
  if (bins < 1) fail(ErrorKind::invalid_input, "bin_indices: bins must be positive");
  TOLCAL_DISPATCH(bin_indices, conf, bins, out);
}

double squared_error_sum(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::invalid_input, "squared_error_sum: length mismatch");
  TOLCAL_DISPATCH(squared_error_sum, a, b);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::invalid_input, "dot: length mismatch");
  TOLCAL_DISPATCH(dot, a, b);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) fail(ErrorKind::invalid_input, "axpy: length mismatch");
  TOLCAL_DISPATCH(axpy, alpha, x, y);
}

#undef TOLCAL_DISPATCH

}  // namespace tolcal::kernels
