#include <algorithm>
#include <cmath>

#include "tolcal/kernels.hpp"

namespace tolcal::kernels::scalar {

void tolerance_mask(std::span<const double> pred, std::span<const double> truth, double epsilon,
                    std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::fabs(pred[i] - truth[i]) <= epsilon ? 1.0 : 0.0;
}

void bin_indices(std::span<const double> conf, int bins, std::span<std::int32_t> out) {
  const double m = static_cast<double>(bins);
  const double top = m - 1.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double idx = std::ceil(conf[i] * m) - 1.0;
    idx = std::min(std::max(idx, 0.0), top);
    // conf * m may round across an edge; settle against the edges idx / m.
    if (idx > 0.0 && conf[i] <= idx / m) idx -= 1.0;
    else if (idx < top && conf[i] > (idx + 1.0) / m) idx += 1.0;
    out[i] = static_cast<std::int32_t>(idx);
  }
}

double squared_error_sum(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace tolcal::kernels::scalar
