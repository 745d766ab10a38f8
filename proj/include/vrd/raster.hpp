#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vrd {

/// Planar floating-point image: `channels` planes of height x width values,
/// each plane row-major. Pixel values are expected in [0,1].
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }
  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }

  std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  std::span<double> row(int c, int y) {
    return {data_.data() + index(c, y, 0), static_cast<std::size_t>(width_)};
  }
  std::span<const double> row(int c, int y) const {
    return {data_.data() + index(c, y, 0), static_cast<std::size_t>(width_)};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

}  // namespace vrd
