// Compiled with -mavx2 (and without -mfma). Every lane repeats the scalar
// reference's operations in the same order.

#include <immintrin.h>

#include <algorithm>
#include <cstddef>

#include "vrd/simd.hpp"

namespace vrd::simd {
namespace {

constexpr std::size_t kLanes = 4;

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double convolve_at(const double* src, std::ptrdiff_t x, std::ptrdiff_t last, const double* w,
                   std::size_t taps) {
  const auto r = static_cast<std::ptrdiff_t>(taps / 2);
  double acc = 0.0;
  for (std::size_t t = 0; t < taps; ++t) {
    const auto s = std::clamp<std::ptrdiff_t>(x + static_cast<std::ptrdiff_t>(t) - r, 0, last);
    acc += w[t] * src[s];
  }
  return acc;
}

void convolve_row(const double* src, double* dst, std::size_t n, const double* w,
                  std::size_t taps) {
  const auto r = static_cast<std::ptrdiff_t>(taps / 2);
  const auto len = static_cast<std::ptrdiff_t>(n);
  const auto last = len - 1;
  // Outputs whose full window lies inside the row need no clamping.
  const std::ptrdiff_t lo = std::min(r, len);
  const std::ptrdiff_t hi = std::max(lo, len - r);

  std::ptrdiff_t x = 0;
  for (; x < lo; ++x) dst[x] = convolve_at(src, x, last, w, taps);
  for (; x + static_cast<std::ptrdiff_t>(kLanes) <= hi; x += kLanes) {
    __m256d acc = _mm256_setzero_pd();
    const double* base = src + x - r;
    for (std::size_t t = 0; t < taps; ++t) {
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(w[t]), _mm256_loadu_pd(base + t)));
    }
    _mm256_storeu_pd(dst + x, acc);
  }
  for (; x < len; ++x) dst[x] = convolve_at(src, x, last, w, taps);
}

void weighted_row_sum(const double* const* rows, const double* w, std::size_t taps, double* dst,
                      std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t t = 0; t < taps; ++t) {
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(w[t]), _mm256_loadu_pd(rows[t] + i)));
    }
    _mm256_storeu_pd(dst + i, acc);
  }
  for (; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < taps; ++t) acc += w[t] * rows[t][i];
    dst[i] = acc;
  }
}

void nesterov_step(double* params, double* velocity, const double* grad, double lr, double mu,
                   std::size_t n) {
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d vmu = _mm256_set1_pd(mu);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d step = _mm256_mul_pd(vlr, _mm256_loadu_pd(grad + i));
    const __m256d v = _mm256_sub_pd(_mm256_mul_pd(vmu, _mm256_loadu_pd(velocity + i)), step);
    _mm256_storeu_pd(velocity + i, v);
    const __m256d delta = _mm256_sub_pd(_mm256_mul_pd(vmu, v), step);
    _mm256_storeu_pd(params + i, _mm256_add_pd(_mm256_loadu_pd(params + i), delta));
  }
  for (; i < n; ++i) {
    const double step = lr * grad[i];
    const double v = mu * velocity[i] - step;
    velocity[i] = v;
    params[i] = params[i] + (mu * v - step);
  }
}

}  // namespace

const Kernels* avx2_kernels() {
  static const Kernels table{axpy, convolve_row, weighted_row_sum, nesterov_step};
  return &table;
}

}  // namespace vrd::simd
