#pragma once

// Data-parallel inner loops used by blur, the softmax model and its
// optimizer. Each kernel has a scalar reference and an AVX2 variant; the
// variant is chosen once at runtime from CPUID.
//
// Vector variants parallelise across independent outputs and keep the exact
// per-output operation order of the scalar reference (no FMA), so every
// level produces bit-identical results.

#include <cstddef>
#include <span>
#include <string_view>

namespace vrd::simd {

enum class Level { Scalar, Avx2 };

struct Kernels {
  /// y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  /// dst[x] = sum_t w[t] * src[clamp(x + t - r, 0, n - 1)], r = (taps - 1) / 2
  void (*convolve_row)(const double* src, double* dst, std::size_t n, const double* w,
                       std::size_t taps);
  /// dst[i] = sum_t w[t] * rows[t][i]
  void (*weighted_row_sum)(const double* const* rows, const double* w, std::size_t taps,
                           double* dst, std::size_t n);
  /// Nesterov momentum step, Keras form:
  ///   v = mu * v - lr * g;  p = p + mu * v - lr * g
  void (*nesterov_step)(double* params, double* velocity, const double* grad, double lr,
                        double mu, std::size_t n);
};

const Kernels& scalar_kernels();
/// Returns nullptr when the binary was built without AVX2 support.
const Kernels* avx2_kernels();

bool cpu_supports(Level level);

/// Best level supported by this CPU, unless the VRD_SIMD environment variable
/// ("scalar" or "avx2") requests a specific one.
Level detect_level();

/// Currently active kernel table.
const Kernels& kernels();
Level active_level();

/// Overrides the active level. Throws UsageError if the CPU lacks support.
void set_level(Level level);

std::string_view level_name(Level level);

}  // namespace vrd::simd
