#include "vrd/geometry.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "vrd/error.hpp"

namespace vrd {

std::int64_t BinaryMask::popcount() const {
  return std::accumulate(bits.begin(), bits.end(), std::int64_t{0});
}

BBox union_box(const BBox& a, const BBox& b) {
  return {std::min(a.xmin, b.xmin), std::min(a.ymin, b.ymin), std::max(a.xmax, b.xmax),
          std::max(a.ymax, b.ymax)};
}

BBox to_local(const BBox& box, const BBox& frame) {
  if (!frame.contains(box)) {
    throw UsageError(fmt::format("box ({},{},{},{}) exceeds frame ({},{},{},{})", box.xmin,
                                 box.ymin, box.xmax, box.ymax, frame.xmin, frame.ymin, frame.xmax,
                                 frame.ymax));
  }
  return {box.xmin - frame.xmin, box.ymin - frame.ymin, box.xmax - frame.xmin,
          box.ymax - frame.ymin};
}

BBox to_global(const BBox& local, const BBox& frame) {
  return {local.xmin + frame.xmin, local.ymin + frame.ymin, local.xmax + frame.xmin,
          local.ymax + frame.ymin};
}

BinaryMask rasterize_box(const BBox& box, int height, int width) {
  if (!BBox{0, 0, width, height}.contains(box) || !box.valid()) {
    throw UsageError(fmt::format("box ({},{},{},{}) does not fit a {}x{} raster", box.xmin,
                                 box.ymin, box.xmax, box.ymax, height, width));
  }
  BinaryMask mask(height, width);
  for (int y = box.ymin; y < box.ymax; ++y) {
    std::fill_n(mask.bits.begin() + static_cast<std::ptrdiff_t>(y) * width + box.xmin,
                box.width(), std::uint8_t{1});
  }
  return mask;
}

BBox clamp_box(const BBox& box, int width, int height) {
  return {std::clamp(box.xmin, 0, width), std::clamp(box.ymin, 0, height),
          std::clamp(box.xmax, 0, width), std::clamp(box.ymax, 0, height)};
}

}  // namespace vrd
