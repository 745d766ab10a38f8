#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "vrd/geometry.hpp"
#include "vrd/raster.hpp"

namespace vrd {

struct ObjectInstance {
  int category_id = 0;
  BBox bbox;
  /// Full-image mask; every set pixel lies inside bbox.
  std::optional<BinaryMask> mask;

  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

struct RelInstance {
  std::string instance_id;
  std::string image_id;
  ObjectInstance subject;
  ObjectInstance object;
  int predicate_id = 0;

  friend bool operator==(const RelInstance&, const RelInstance&) = default;
};

enum class SplitName { Train, Test, ZeroShot };

std::string_view split_name(SplitName name);
SplitName parse_split_name(std::string_view text);

/// (subject category, predicate, object category)
using Triple = std::tuple<int, int, int>;

struct DatasetSplit {
  SplitName name = SplitName::Train;
  std::vector<RelInstance> instances;
  std::vector<std::string> object_vocab;
  std::vector<std::string> predicate_vocab;

  Triple triple(std::size_t i) const;
  /// Index of `id` in instances, or nullopt.
  std::optional<std::size_t> find(std::string_view instance_id) const;
};

struct ParseReport {
  std::size_t images = 0;
  std::size_t instances = 0;
  std::size_t clamped_boxes = 0;
  std::size_t clipped_masks = 0;
};

/// Paths of the vocabulary sidecars that sit next to an annotation file
/// unless given explicitly.
struct VocabPaths {
  std::filesystem::path objects;
  std::filesystem::path predicates;

  static VocabPaths beside(const std::filesystem::path& annotations);
};

std::vector<std::string> read_vocab(const std::filesystem::path& path);
void write_vocab(const std::filesystem::path& path, const std::vector<std::string>& vocab);

/// Loads a canonical annotation file. Image dimensions are read from the PNG
/// headers under `image_root`; boxes poking out of the image are clamped and
/// counted in `report`. Throws DataError naming the offending record for
/// malformed input or unknown category names.
DatasetSplit parse_annotations(const std::filesystem::path& path,
                               const std::filesystem::path& image_root, const VocabPaths& vocab,
                               SplitName name, ParseReport* report = nullptr);

/// Writes the canonical annotation JSON for `split`. Masks are stored as
/// row-major run lengths. The output is deterministic.
void write_annotations(const std::filesystem::path& path, const DatasetSplit& split);

/// Test instances whose triple never occurs in train, in test order.
DatasetSplit derive_zero_shot(const DatasetSplit& train, const DatasetSplit& test);

/// Vocabulary of the synthetic spatial datasets.
const std::vector<std::string>& synthetic_predicates();
const std::vector<std::string>& synthetic_objects();

/// Spatial relation of a subject to an object from their centres:
/// |dy| >= |dx| selects above/below, otherwise left/right. Returns an index
/// into synthetic_predicates().
int spatial_predicate(double subject_cx, double subject_cy, double object_cx, double object_cy);
int spatial_predicate(const BBox& subject, const BBox& object);

struct SyntheticData {
  DatasetSplit split;
  /// image_id -> image; left empty when images go to a sink.
  std::map<std::string, Raster> images;
};

using ImageSink = std::function<void(const std::string& image_id, const Raster& image)>;

/// Deterministic synthetic dataset: one image per instance with two textured
/// rectangles over a cluttered background. Predicates are assigned round-robin
/// so all four occur once n >= 4. Placements whose relation would flip when
/// the union crop is stretched to a square are resampled. `id_prefix`
/// namespaces image ids so that several splits can share an image directory.
SyntheticData generate_synthetic(int n, std::uint64_t seed, int image_size,
                                 std::string_view id_prefix = "syn", const ImageSink& sink = {});

}  // namespace vrd
