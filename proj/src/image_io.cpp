#include "vrd/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "vrd/error.hpp"

namespace vrd {
namespace {

// RAII over libpng's simplified-API control structure.
class PngImage {
 public:
  PngImage() {
    std::memset(&image_, 0, sizeof(image_));
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;

  png_image* get() { return &image_; }
  png_image* operator->() { return &image_; }

 private:
  png_image image_;
};

void begin_read(PngImage& image, const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw DataError(fmt::format("image not found: {}", path.string()));
  }
  if (!png_image_begin_read_from_file(image.get(), path.c_str())) {
    throw DataError(fmt::format("{}: {}", path.string(), image->message));
  }
}

}  // namespace

std::uint8_t quantize_u8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::pair<int, int> png_dimensions(const std::filesystem::path& path) {
  PngImage image;
  begin_read(image, path);
  return {static_cast<int>(image->height), static_cast<int>(image->width)};
}

Raster read_png(const std::filesystem::path& path) {
  PngImage image;
  begin_read(image, path);
  const bool color = (image->format & PNG_FORMAT_FLAG_COLOR) != 0;
  const int channels = color ? 3 : 1;
  image->format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  const int h = static_cast<int>(image->height);
  const int w = static_cast<int>(image->width);
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(*image.get()));
  if (!png_image_finish_read(image.get(), nullptr, pixels.data(), 0, nullptr)) {
    throw DataError(fmt::format("{}: {}", path.string(), image->message));
  }

  Raster out(h, w, channels);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < h; ++y) {
      const png_byte* src = pixels.data() + static_cast<std::size_t>(y) * w * channels + c;
      auto dst = out.row(c, y);
      for (int x = 0; x < w; ++x) dst[x] = src[static_cast<std::size_t>(x) * channels] / 255.0;
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Raster& image) {
  const int h = image.height();
  const int w = image.width();
  const int channels = image.channels();
  std::vector<png_byte> pixels(static_cast<std::size_t>(h) * w * channels);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < h; ++y) {
      auto src = image.row(c, y);
      png_byte* dst = pixels.data() + static_cast<std::size_t>(y) * w * channels + c;
      for (int x = 0; x < w; ++x) dst[static_cast<std::size_t>(x) * channels] = quantize_u8(src[x]);
    }
  }

  PngImage png;
  png->width = static_cast<png_uint_32>(w);
  png->height = static_cast<png_uint_32>(h);
  png->format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(png.get(), path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw Error(fmt::format("cannot write {}: {}", path.string(), png->message));
  }
}

}  // namespace vrd

// JPEG ------------------------------------------------------------------------

#include <jpeglib.h>

#include <csetjmp>
#include <cstdio>

namespace vrd {
namespace {

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

enum class ImageKind { Png, Jpeg, Unknown };

ImageKind sniff(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError(fmt::format("image not found: {}", path.string()));
  unsigned char sig[8] = {};
  const std::size_t got = std::fread(sig, 1, sizeof sig, f);
  std::fclose(f);
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) return ImageKind::Png;
  if (got >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return ImageKind::Jpeg;
  return ImageKind::Unknown;
}

// Decodes into interleaved 8-bit samples. No C++ objects with destructors
// live between setjmp and the libjpeg calls that may longjmp.
bool decode_jpeg(std::FILE* file, bool header_only, int* height, int* width, int* channels,
                 std::vector<unsigned char>* pixels, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  if (header_only) {
    *height = static_cast<int>(cinfo.image_height);
    *width = static_cast<int>(cinfo.image_width);
    jpeg_destroy_decompress(&cinfo);
    return true;
  }
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  *height = static_cast<int>(cinfo.output_height);
  *width = static_cast<int>(cinfo.output_width);
  *channels = cinfo.output_components;
  const std::size_t stride = static_cast<std::size_t>(*width) * *channels;
  pixels->resize(stride * *height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels->data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Raster read_jpeg(const std::filesystem::path& path, bool header_only, int* h_out, int* w_out) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError(fmt::format("image not found: {}", path.string()));
  int h = 0, w = 0, channels = 0;
  std::vector<unsigned char> pixels;
  char message[JMSG_LENGTH_MAX] = {};
  const bool ok = decode_jpeg(f, header_only, &h, &w, &channels, &pixels, message);
  std::fclose(f);
  if (!ok) throw DataError(fmt::format("{}: {}", path.string(), message));
  *h_out = h;
  *w_out = w;
  if (header_only) return {};
  Raster out(h, w, channels);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < h; ++y) {
      auto dst = out.row(c, y);
      const unsigned char* src = pixels.data() + static_cast<std::size_t>(y) * w * channels + c;
      for (int x = 0; x < w; ++x) dst[x] = src[static_cast<std::size_t>(x) * channels] / 255.0;
    }
  }
  return out;
}

}  // namespace

Raster read_image(const std::filesystem::path& path) {
  switch (sniff(path)) {
    case ImageKind::Png:
      return read_png(path);
    case ImageKind::Jpeg: {
      int h = 0, w = 0;
      return read_jpeg(path, false, &h, &w);
    }
    case ImageKind::Unknown:
      break;
  }
  throw DataError(fmt::format("{}: unsupported image format (PNG or JPEG expected)", path.string()));
}

std::pair<int, int> image_dimensions(const std::filesystem::path& path) {
  switch (sniff(path)) {
    case ImageKind::Png:
      return png_dimensions(path);
    case ImageKind::Jpeg: {
      int h = 0, w = 0;
      read_jpeg(path, true, &h, &w);
      return {h, w};
    }
    case ImageKind::Unknown:
      break;
  }
  throw DataError(fmt::format("{}: unsupported image format (PNG or JPEG expected)", path.string()));
}

}  // namespace vrd
