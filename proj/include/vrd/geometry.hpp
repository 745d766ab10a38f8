#pragma once

#include <cstdint>
#include <vector>

namespace vrd {

/// Axis-aligned box in pixel coordinates. Origin is top-left and the max
/// edges are exclusive, so a box covers columns [xmin, xmax) and rows
/// [ymin, ymax).
struct BBox {
  int xmin = 0;
  int ymin = 0;
  int xmax = 0;
  int ymax = 0;

  int width() const { return xmax - xmin; }
  int height() const { return ymax - ymin; }
  std::int64_t area() const { return std::int64_t{width()} * height(); }
  bool valid() const { return xmin >= 0 && ymin >= 0 && xmin < xmax && ymin < ymax; }
  bool contains(int x, int y) const { return x >= xmin && x < xmax && y >= ymin && y < ymax; }
  bool contains(const BBox& other) const {
    return other.xmin >= xmin && other.ymin >= ymin && other.xmax <= xmax && other.ymax <= ymax;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Row-major H x W raster of {0,1} values.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::int64_t popcount() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Smallest box enclosing both inputs.
BBox union_box(const BBox& a, const BBox& b);

/// Translates `box` into the coordinate frame whose origin is `frame`'s
/// top-left corner. Throws UsageError if `box` is not inside `frame`.
BBox to_local(const BBox& box, const BBox& frame);

/// Inverse of to_local.
BBox to_global(const BBox& local, const BBox& frame);

/// Mask that is 1 exactly on the pixels of `box`. Throws UsageError if the box
/// does not fit in a height x width frame.
BinaryMask rasterize_box(const BBox& box, int height, int width);

/// Clamps `box` to [0,width) x [0,height). The result may be empty.
BBox clamp_box(const BBox& box, int width, int height);

}  // namespace vrd
