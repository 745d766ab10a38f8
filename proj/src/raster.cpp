#include "vrd/raster.hpp"

#include <fmt/format.h>

#include "vrd/error.hpp"

namespace vrd {

Raster::Raster(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height <= 0 || width <= 0 || (channels != 1 && channels != 3)) {
    throw UsageError(fmt::format("invalid raster shape {}x{}x{}", height, width, channels));
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

}  // namespace vrd
