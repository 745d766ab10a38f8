#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vrd/raster.hpp"

namespace vrd {

/// Decodes an 8-bit gray, gray+alpha, RGB or RGBA PNG into a 1- or 3-channel
/// raster scaled to [0,1]. Alpha is dropped.
Raster read_png(const std::filesystem::path& path);

/// (height, width) from the PNG header without decoding pixel data.
std::pair<int, int> png_dimensions(const std::filesystem::path& path);

/// Decodes a PNG or baseline JPEG, chosen by file signature.
Raster read_image(const std::filesystem::path& path);

/// (height, width) of a PNG or JPEG.
std::pair<int, int> image_dimensions(const std::filesystem::path& path);

/// Encodes a 1- or 3-channel raster as an 8-bit PNG, rounding v * 255.
/// Values are clamped to [0,1] first. Output bytes are deterministic.
void write_png(const std::filesystem::path& path, const Raster& image);

/// 8-bit code used by write_png for one value.
std::uint8_t quantize_u8(double v);

}  // namespace vrd
