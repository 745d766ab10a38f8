#include "vrd/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "vrd/csv.hpp"
#include "vrd/image_io.hpp"
#include "vrd/log.hpp"
#include "vrd/simd.hpp"

namespace vrd {

namespace fs = std::filesystem;

namespace {

struct MethodInfo {
  Method method;
  std::string_view token;
  std::string_view label;
  int channels;
  double sigma;  // 0 when not a blur method
};

constexpr MethodInfo kMethods[] = {
    {Method::Union, "Union", "Union", 3, 0},
    {Method::UnionWB, "UnionWB", "Union-WB", 3, 0},
    {Method::UnionWBSC, "UnionWBSC", "Union-WB-SC", 1, 0},
    {Method::UnionWBB, "UnionWBB", "Union-WB-B", 3, 0},
    {Method::UnionWBBSC, "UnionWBBSC", "Union-WB-B-SC", 1, 0},
    {Method::UnionWBandB, "UnionWBandB", "Union-WB-and-B", 3, 0},
    {Method::Segment, "Segment", "Segment", 3, 0},
    {Method::SegmentB, "SegmentB", "Segment-B", 3, 0},
    {Method::BlurSigma3, "BlurSigma3", "Blur-Sigma3", 3, 3},
    {Method::BlurSigma5, "BlurSigma5", "Blur-Sigma5", 3, 5},
    {Method::BlurSigma7, "BlurSigma7", "Blur-Sigma7", 3, 7},
};

const MethodInfo& info(Method m) { return kMethods[static_cast<int>(m)]; }

}  // namespace

std::string_view method_token(Method m) { return info(m).token; }
std::string_view method_label(Method m) { return info(m).label; }

Method parse_method(std::string_view text) {
  for (const auto& mi : kMethods) {
    if (text == mi.token || text == mi.label) return mi.method;
  }
  throw UsageError(fmt::format("unknown preprocessing method '{}'", text));
}

int method_channels(Method m) { return info(m).channels; }

bool method_needs_masks(Method m) { return m == Method::Segment || m == Method::SegmentB; }

std::optional<double> method_sigma(Method m) {
  if (info(m).sigma > 0) return info(m).sigma;
  return std::nullopt;
}

int method_kernel_side(Method m) {
  const auto sigma = method_sigma(m);
  if (!sigma) throw UsageError(fmt::format("{} is not a blur method", method_label(m)));
  return 2 * static_cast<int>(std::ceil(3 * *sigma)) + 1;
}

// Gaussian blur ---------------------------------------------------------------

GaussianKernel gaussian_kernel(double sigma, int side) {
  if (!(sigma > 0)) throw UsageError(fmt::format("kernel sigma must be > 0, got {}", sigma));
  if (side < 3 || side % 2 == 0) {
    throw UsageError(fmt::format("kernel side must be odd and >= 3, got {}", side));
  }
  GaussianKernel k{sigma, side, std::vector<double>(side)};
  const int c = k.radius();
  double sum = 0.0;
  for (int i = 0; i < side; ++i) {
    const double d = i - c;
    k.weights[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += k.weights[i];
  }
  for (double& w : k.weights) w /= sum;
  return k;
}

Raster blur(const Raster& image, const GaussianKernel& kernel) {
  const auto& kern = simd::kernels();
  const int h = image.height();
  const int w = image.width();
  const int r = kernel.radius();
  const std::size_t taps = kernel.weights.size();

  Raster horizontal(h, w, image.channels());
  Raster out(h, w, image.channels());
  std::vector<const double*> rows(taps);
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      kern.convolve_row(image.row(c, y).data(), horizontal.row(c, y).data(), w,
                        kernel.weights.data(), taps);
    }
    for (int y = 0; y < h; ++y) {
      for (std::size_t t = 0; t < taps; ++t) {
        const int src = std::clamp(y + static_cast<int>(t) - r, 0, h - 1);
        rows[t] = horizontal.row(c, src).data();
      }
      kern.weighted_row_sum(rows.data(), kernel.weights.data(), taps, out.row(c, y).data(), w);
    }
  }
  return out;
}

Raster to_grayscale(const Raster& image) {
  if (image.channels() == 1) return image;
  Raster out(image.height(), image.width(), 1);
  const auto r = image.plane(0);
  const auto g = image.plane(1);
  const auto b = image.plane(2);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

// Composition -----------------------------------------------------------------

namespace {

Raster as_rgb(const Raster& image) {
  if (image.channels() == 3) return image;
  Raster out(image.height(), image.width(), 3);
  for (int c = 0; c < 3; ++c) std::copy_n(image.plane(0).begin(), image.plane_size(), out.plane(c).begin());
  return out;
}

Raster crop(const Raster& image, const BBox& frame) {
  Raster out(frame.height(), frame.width(), image.channels());
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < frame.height(); ++y) {
      const auto src = image.row(c, frame.ymin + y);
      std::copy_n(src.begin() + frame.xmin, frame.width(), out.row(c, y).begin());
    }
  }
  return out;
}

BinaryMask crop(const BinaryMask& mask, const BBox& frame) {
  BinaryMask out(frame.height(), frame.width());
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) out.at(x, y) = mask.at(frame.xmin + x, frame.ymin + y);
  }
  return out;
}

BinaryMask either(const BinaryMask& a, const BinaryMask& b) {
  BinaryMask out(a.height, a.width);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = a.bits[i] | b.bits[i];
  return out;
}

// Zeroes every pixel outside `keep`.
Raster masked(Raster image, const BinaryMask& keep) {
  for (int c = 0; c < image.channels(); ++c) {
    auto plane = image.plane(c);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      if (!keep.bits[i]) plane[i] = 0.0;
    }
  }
  return image;
}

void fill_channel(Raster& out, int channel, const BinaryMask& mask, double on) {
  auto plane = out.plane(channel);
  for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = mask.bits[i] ? on : 0.0;
}

void check_object(const ObjectInstance& o, const Raster& image, std::string_view role,
                  const RelInstance& inst) {
  if (!o.bbox.valid() || !BBox{0, 0, image.width(), image.height()}.contains(o.bbox)) {
    throw DataError(fmt::format("{}: {} box ({},{},{},{}) is not inside the {}x{} image",
                                inst.instance_id, role, o.bbox.xmin, o.bbox.ymin, o.bbox.xmax,
                                o.bbox.ymax, image.height(), image.width()));
  }
  if (o.mask && (o.mask->height != image.height() || o.mask->width != image.width())) {
    throw DataError(fmt::format("{}: {} mask size does not match the image", inst.instance_id, role));
  }
}

}  // namespace

Composite compose(const RelInstance& instance, const Raster& source, Method method,
                  const TransformOptions& options) {
  check_object(instance.subject, source, "subject", instance);
  check_object(instance.object, source, "object", instance);
  if (method_needs_masks(method) && (!instance.subject.mask || !instance.object.mask)) {
    throw MissingMaskError(
        fmt::format("{}: {} needs segmentation masks", instance.instance_id, method_label(method)));
  }

  const BBox frame = union_box(instance.subject.bbox, instance.object.bbox);
  if (!frame.valid()) throw DataError(fmt::format("{}: degenerate union box", instance.instance_id));
  const int h = frame.height();
  const int w = frame.width();

  const Raster image = as_rgb(source);
  const BinaryMask subject_box = rasterize_box(to_local(instance.subject.bbox, frame), h, w);
  const BinaryMask object_box = rasterize_box(to_local(instance.object.bbox, frame), h, w);
  const BinaryMask boxes = either(subject_box, object_box);

  Composite out;
  switch (method) {
    case Method::Union:
      out.crop = crop(image, frame);
      break;
    case Method::UnionWB:
      out.crop = masked(crop(image, frame), boxes);
      break;
    case Method::UnionWBSC:
      out.crop = to_grayscale(masked(crop(image, frame), boxes));
      break;
    case Method::UnionWBB:
      out.crop = Raster(h, w, 3);
      fill_channel(out.crop, kChannelG, subject_box, 1.0);
      fill_channel(out.crop, kChannelB, object_box, 1.0);
      out.mask_channels = {true, true, true};
      break;
    case Method::UnionWBBSC: {
      out.crop = Raster(h, w, 1);
      auto plane = out.crop.plane(0);
      for (std::size_t i = 0; i < plane.size(); ++i) {
        plane[i] = subject_box.bits[i] ? 1.0 : (object_box.bits[i] ? 0.5 : 0.0);
      }
      out.mask_channels = {true};
      break;
    }
    case Method::UnionWBandB: {
      out.crop = Raster(h, w, 3);
      if (options.wbandb_layout == WBandBLayout::PerObjectGray) {
        const Raster gray = to_grayscale(crop(image, frame));
        const Raster subject_gray = masked(gray, subject_box);
        const Raster object_gray = masked(gray, object_box);
        std::copy_n(subject_gray.plane(0).begin(), gray.plane_size(), out.crop.plane(kChannelG).begin());
        std::copy_n(object_gray.plane(0).begin(), gray.plane_size(), out.crop.plane(kChannelB).begin());
        out.mask_channels = {true, false, false};
      } else {
        const Raster gray = to_grayscale(masked(crop(image, frame), boxes));
        std::copy_n(gray.plane(0).begin(), gray.plane_size(), out.crop.plane(kChannelR).begin());
        fill_channel(out.crop, kChannelG, subject_box, 1.0);
        fill_channel(out.crop, kChannelB, object_box, 1.0);
        out.mask_channels = {false, true, true};
      }
      break;
    }
    case Method::Segment:
      out.crop = masked(crop(image, frame),
                        either(crop(*instance.subject.mask, frame), crop(*instance.object.mask, frame)));
      break;
    case Method::SegmentB:
      out.crop = Raster(h, w, 3);
      fill_channel(out.crop, kChannelG, crop(*instance.subject.mask, frame), 1.0);
      fill_channel(out.crop, kChannelB, crop(*instance.object.mask, frame), 1.0);
      out.mask_channels = {true, true, true};
      break;
    case Method::BlurSigma3:
    case Method::BlurSigma5:
    case Method::BlurSigma7: {
      const GaussianKernel kernel = gaussian_kernel(*method_sigma(method), method_kernel_side(method));
      const Raster blurred = crop(blur(image, kernel), frame);
      out.crop = crop(image, frame);
      for (int c = 0; c < 3; ++c) {
        auto dst = out.crop.plane(c);
        const auto bg = blurred.plane(c);
        for (std::size_t i = 0; i < dst.size(); ++i) {
          if (!boxes.bits[i]) dst[i] = bg[i];
        }
      }
      break;
    }
  }
  if (out.mask_channels.empty()) out.mask_channels.assign(out.crop.channels(), false);
  return out;
}

// Resizing --------------------------------------------------------------------

namespace {

struct Tap {
  int lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(s));
    taps[i] = {lo, std::min(lo + 1, in - 1), s - lo};
  }
  return taps;
}

std::vector<int> nearest_taps(int in, int out) {
  std::vector<int> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    taps[i] = std::min(static_cast<int>(std::floor((i + 0.5) * scale)), in - 1);
  }
  return taps;
}

void bilinear_channel(const Raster& in, int c, Raster& out, int oc, const std::vector<Tap>& ys,
                      const std::vector<Tap>& xs) {
  for (int y = 0; y < out.height(); ++y) {
    const auto top = in.row(c, ys[y].lo);
    const auto bottom = in.row(c, ys[y].hi);
    const double fy = ys[y].frac;
    auto dst = out.row(oc, y);
    for (int x = 0; x < out.width(); ++x) {
      const double fx = xs[x].frac;
      const double t = (1.0 - fx) * top[xs[x].lo] + fx * top[xs[x].hi];
      const double b = (1.0 - fx) * bottom[xs[x].lo] + fx * bottom[xs[x].hi];
      dst[x] = (1.0 - fy) * t + fy * b;
    }
  }
}

void nearest_channel(const Raster& in, int c, Raster& out, int oc, const std::vector<int>& ys,
                     const std::vector<int>& xs) {
  for (int y = 0; y < out.height(); ++y) {
    const auto src = in.row(c, ys[y]);
    auto dst = out.row(oc, y);
    for (int x = 0; x < out.width(); ++x) dst[x] = src[xs[x]];
  }
}

}  // namespace

Raster bilinear_resize(const Raster& image, int out_h, int out_w) {
  Raster out(out_h, out_w, image.channels());
  const auto ys = bilinear_taps(image.height(), out_h);
  const auto xs = bilinear_taps(image.width(), out_w);
  for (int c = 0; c < image.channels(); ++c) bilinear_channel(image, c, out, c, ys, xs);
  return out;
}

Raster nearest_resize(const Raster& image, int out_h, int out_w) {
  Raster out(out_h, out_w, image.channels());
  const auto ys = nearest_taps(image.height(), out_h);
  const auto xs = nearest_taps(image.width(), out_w);
  for (int c = 0; c < image.channels(); ++c) nearest_channel(image, c, out, c, ys, xs);
  return out;
}

Raster resize_normalize(const Raster& image, int target, const std::vector<bool>& mask_channels) {
  if (target <= 0) throw UsageError(fmt::format("resize target must be > 0, got {}", target));
  Raster out(target, target, image.channels());
  const auto bys = bilinear_taps(image.height(), target);
  const auto bxs = bilinear_taps(image.width(), target);
  const auto nys = nearest_taps(image.height(), target);
  const auto nxs = nearest_taps(image.width(), target);
  for (int c = 0; c < image.channels(); ++c) {
    const bool nearest = c < static_cast<int>(mask_channels.size()) && mask_channels[c];
    if (nearest) {
      nearest_channel(image, c, out, c, nys, nxs);
    } else {
      bilinear_channel(image, c, out, c, bys, bxs);
    }
  }
  for (double& v : out.data()) {
    if (std::isnan(v)) throw DataError("raster contains NaN");
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

Raster preprocess(const RelInstance& instance, const Raster& image, Method method,
                  const TransformOptions& options) {
  const Composite c = compose(instance, image, method, options);
  return resize_normalize(c.crop, options.target_size, c.mask_channels);
}

// Emission --------------------------------------------------------------------

void write_manifest(const fs::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << "instance_id,predicate_id,method,relative_path\n";
  for (const auto& r : rows) {
    out << csv::join({r.instance_id, std::to_string(r.predicate_id), r.method, r.relative_path})
        << '\n';
  }
  if (!out) throw Error(fmt::format("failed writing {}", path.string()));
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("dataset manifest not found: {}", path.string()));
  const auto records = csv::read_all(in);
  if (records.empty() || records[0].size() != 4 || records[0][0] != "instance_id") {
    throw DataError(fmt::format("{}: bad manifest header", path.string()));
  }
  std::vector<ManifestRow> rows;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() != 4) throw DataError(fmt::format("{}: line {} needs 4 fields", path.string(), i + 1));
    rows.push_back({f[0], static_cast<int>(csv::to_int(f[1], "predicate_id")), f[2], f[3]});
  }
  return rows;
}

EmitResult emit_dataset(const DatasetSplit& split, const fs::path& image_root, Method method,
                        const fs::path& out_dir, const TransformOptions& options) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw Error(fmt::format("cannot create output directory {}", out_dir.string()));
  }

  EmitResult result;
  std::string cached_id;
  Raster cached;
  for (const auto& inst : split.instances) {
    if (inst.image_id != cached_id) {
      cached = read_image(image_root / inst.image_id);
      cached_id = inst.image_id;
    }
    Raster out;
    try {
      out = preprocess(inst, cached, method, options);
    } catch (const MissingMaskError&) {
      result.skipped.push_back(inst.instance_id);
      continue;
    }
    const std::string file = inst.instance_id + ".png";
    write_png(out_dir / file, out);
    result.rows.push_back({inst.instance_id, inst.predicate_id, std::string(method_token(method)), file});
  }
  if (!result.skipped.empty()) {
    log_warn("{}: skipped {} instances without segmentation masks", method_label(method),
             result.skipped.size());
  }
  write_manifest(out_dir / kManifestFile, result.rows);
  return result;
}

}  // namespace vrd
