#include <algorithm>
#include <cstddef>

#include "vrd/simd.hpp"

namespace vrd::simd {
namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void convolve_row(const double* src, double* dst, std::size_t n, const double* w,
                  std::size_t taps) {
  const auto r = static_cast<std::ptrdiff_t>(taps / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  for (std::ptrdiff_t x = 0; x <= last; ++x) {
    double acc = 0.0;
    for (std::size_t t = 0; t < taps; ++t) {
      const auto s = std::clamp<std::ptrdiff_t>(x + static_cast<std::ptrdiff_t>(t) - r, 0, last);
      acc += w[t] * src[s];
    }
    dst[x] = acc;
  }
}

void weighted_row_sum(const double* const* rows, const double* w, std::size_t taps, double* dst,
                      std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < taps; ++t) acc += w[t] * rows[t][i];
    dst[i] = acc;
  }
}

void nesterov_step(double* params, double* velocity, const double* grad, double lr, double mu,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double step = lr * grad[i];
    const double v = mu * velocity[i] - step;
    velocity[i] = v;
    params[i] = params[i] + (mu * v - step);
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels table{axpy, convolve_row, weighted_row_sum, nesterov_step};
  return table;
}

}  // namespace vrd::simd
