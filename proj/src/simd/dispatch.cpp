#include <atomic>
#include <cstdlib>
#include <string>

#include "vrd/error.hpp"
#include "vrd/simd.hpp"

namespace vrd::simd {

#ifndef VRD_HAVE_AVX2
const Kernels* avx2_kernels() { return nullptr; }
#endif

namespace {

const Kernels& table_for(Level level) {
  if (level == Level::Avx2 && avx2_kernels() != nullptr) return *avx2_kernels();
  return scalar_kernels();
}

std::atomic<Level>& active() {
  static std::atomic<Level> level{detect_level()};
  return level;
}

}  // namespace

bool cpu_supports(Level level) {
  switch (level) {
    case Level::Scalar:
      return true;
    case Level::Avx2:
#if defined(VRD_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Level detect_level() {
  if (const char* env = std::getenv("VRD_SIMD")) {
    const std::string want{env};
    if (want == "scalar") return Level::Scalar;
    if (want == "avx2" && cpu_supports(Level::Avx2)) return Level::Avx2;
  }
  return cpu_supports(Level::Avx2) ? Level::Avx2 : Level::Scalar;
}

const Kernels& kernels() { return table_for(active().load(std::memory_order_relaxed)); }

Level active_level() { return active().load(std::memory_order_relaxed); }

void set_level(Level level) {
  if (!cpu_supports(level)) {
    throw UsageError(std::string("SIMD level not supported on this CPU: ") +
                     std::string(level_name(level)));
  }
  active().store(level, std::memory_order_relaxed);
}

std::string_view level_name(Level level) {
  return level == Level::Avx2 ? "avx2" : "scalar";
}

}  // namespace vrd::simd
