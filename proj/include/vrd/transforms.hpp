#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrd/dataset.hpp"
#include "vrd/error.hpp"
#include "vrd/raster.hpp"

namespace vrd {

enum class Method {
  Union,
  UnionWB,
  UnionWBSC,
  UnionWBB,
  UnionWBBSC,
  UnionWBandB,
  Segment,
  SegmentB,
  BlurSigma3,
  BlurSigma5,
  BlurSigma7,
};

inline constexpr std::array<Method, 11> kAllMethods = {
    Method::Union,      Method::UnionWB,    Method::UnionWBSC,  Method::UnionWBB,
    Method::UnionWBBSC, Method::UnionWBandB, Method::Segment,   Method::SegmentB,
    Method::BlurSigma3, Method::BlurSigma5, Method::BlurSigma7,
};

/// Identifier used on the command line and in file names, e.g. "UnionWBB".
std::string_view method_token(Method m);
/// Hyphenated label used in reports, e.g. "Union-WB-B".
std::string_view method_label(Method m);
/// Accepts either the token or the label, case-sensitive.
Method parse_method(std::string_view text);

int method_channels(Method m);
bool method_needs_masks(Method m);
/// Blur standard deviation for the BlurSigma methods, nullopt otherwise.
std::optional<double> method_sigma(Method m);
/// Kernel side 2 * ceil(3 sigma) + 1 for the BlurSigma methods (19, 31, 43).
int method_kernel_side(Method m);

/// The two readings of the Union-WB-and-B layout.
enum class WBandBLayout {
  /// G = gray content inside the subject box, B = gray content inside the
  /// object box, R = 0.
  PerObjectGray,
  /// R = gray Union-WB, G = subject box mask, B = object box mask.
  GrayPlusMasks,
};

struct TransformOptions {
  WBandBLayout wbandb_layout = WBandBLayout::PerObjectGray;
  int target_size = 224;
};

inline constexpr int kChannelR = 0;
inline constexpr int kChannelG = 1;
inline constexpr int kChannelB = 2;

/// Thrown by the Segment methods for instances without segmentation masks.
class MissingMaskError : public DataError {
 public:
  using DataError::DataError;
};

struct GaussianKernel {
  double sigma = 0.0;
  int side = 0;
  std::vector<double> weights;

  int radius() const { return (side - 1) / 2; }
};

/// Normalised 1-D Gaussian: w[i] proportional to exp(-(i - c)^2 / (2 sigma^2)).
GaussianKernel gaussian_kernel(double sigma, int side);

/// Separable convolution, horizontal then vertical pass, edge replication at
/// the borders. Output has the input's shape.
Raster blur(const Raster& image, const GaussianKernel& kernel);

/// BT.601 luma of a 3-channel raster; 1-channel input is returned as is.
Raster to_grayscale(const Raster& image);

/// A method's output before resizing, in the union-box frame.
struct Composite {
  Raster crop;
  /// Channels holding binary or label masks; they are resized
  /// nearest-neighbour so their values stay discrete.
  std::vector<bool> mask_channels;
};

Composite compose(const RelInstance& instance, const Raster& image, Method method,
                  const TransformOptions& options = {});

/// Resizes to target x target (bilinear, half-pixel centres, clamped edges;
/// nearest for channels flagged in `mask_channels`) and clamps to [0,1].
Raster resize_normalize(const Raster& image, int target, const std::vector<bool>& mask_channels = {});

Raster bilinear_resize(const Raster& image, int out_h, int out_w);
Raster nearest_resize(const Raster& image, int out_h, int out_w);

/// compose() followed by resize_normalize().
Raster preprocess(const RelInstance& instance, const Raster& image, Method method,
                  const TransformOptions& options = {});

struct ManifestRow {
  std::string instance_id;
  int predicate_id = 0;
  std::string method;
  std::string relative_path;
};

struct EmitResult {
  std::vector<ManifestRow> rows;
  std::vector<std::string> skipped;
};

inline constexpr std::string_view kManifestFile = "manifest.csv";

/// Writes <out_dir>/<instance_id>.png for every instance plus
/// <out_dir>/manifest.csv. Instances the method cannot handle (no masks for
/// the Segment methods) are skipped and listed in the result.
EmitResult emit_dataset(const DatasetSplit& split, const std::filesystem::path& image_root,
                        Method method, const std::filesystem::path& out_dir,
                        const TransformOptions& options = {});

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

}  // namespace vrd
