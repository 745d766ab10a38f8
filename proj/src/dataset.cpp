#include "vrd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "vrd/error.hpp"
#include "vrd/image_io.hpp"
#include "vrd/log.hpp"

namespace vrd {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view split_name(SplitName name) {
  switch (name) {
    case SplitName::Train:
      return "train";
    case SplitName::Test:
      return "test";
    case SplitName::ZeroShot:
      return "zero_shot";
  }
  return "train";
}

SplitName parse_split_name(std::string_view text) {
  if (text == "train") return SplitName::Train;
  if (text == "test") return SplitName::Test;
  if (text == "zero_shot" || text == "zero-shot") return SplitName::ZeroShot;
  throw UsageError(fmt::format("unknown split '{}' (expected train, test or zero_shot)", text));
}

Triple DatasetSplit::triple(std::size_t i) const {
  const auto& r = instances[i];
  return {r.subject.category_id, r.predicate_id, r.object.category_id};
}

std::optional<std::size_t> DatasetSplit::find(std::string_view instance_id) const {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].instance_id == instance_id) return i;
  }
  return std::nullopt;
}

VocabPaths VocabPaths::beside(const fs::path& annotations) {
  const fs::path dir = annotations.parent_path();
  return {dir / "objects.txt", dir / "predicates.txt"};
}

std::vector<std::string> read_vocab(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open vocabulary {}", path.string()));
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    names.push_back(line);
  }
  if (names.empty()) throw DataError(fmt::format("vocabulary {} is empty", path.string()));
  return names;
}

void write_vocab(const fs::path& path, const std::vector<std::string>& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  for (const auto& name : vocab) out << name << '\n';
}

namespace {

class RecordError : public DataError {
 public:
  RecordError(std::size_t index, std::string_view image, std::string_view what)
      : DataError(fmt::format("record {} ({}): {}", index, image, what)) {}
};

int lookup(const json& value, const std::vector<std::string>& vocab,
           const std::unordered_map<std::string, int>& index, std::string_view kind) {
  if (value.is_string()) {
    const auto it = index.find(value.get<std::string>());
    if (it == index.end()) {
      throw DataError(fmt::format("unknown {} '{}'", kind, value.get<std::string>()));
    }
    return it->second;
  }
  if (value.is_number_integer()) {
    const auto id = value.get<long long>();
    if (id < 0 || id >= static_cast<long long>(vocab.size())) {
      throw DataError(fmt::format("{} id {} outside vocabulary of {}", kind, id, vocab.size()));
    }
    return static_cast<int>(id);
  }
  throw DataError(fmt::format("{} must be a name or an integer id", kind));
}

// Even-odd test on pixel centres.
BinaryMask rasterize_polygon(const std::vector<double>& xy, int height, int width) {
  if (xy.size() < 6 || xy.size() % 2 != 0) {
    throw DataError("polygon needs at least three x,y pairs");
  }
  const std::size_t n = xy.size() / 2;
  BinaryMask mask(height, width);
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5;
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = xy[2 * i], yi = xy[2 * i + 1];
        const double xj = xy[2 * j], yj = xy[2 * j + 1];
        if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) {
          inside = !inside;
        }
      }
      mask.at(x, y) = inside ? 1 : 0;
    }
  }
  return mask;
}

// Row-major run lengths, first run counts zeros.
BinaryMask decode_rle(const std::vector<long long>& counts, int height, int width) {
  BinaryMask mask(height, width);
  const auto total = static_cast<long long>(height) * width;
  long long pos = 0;
  std::uint8_t value = 0;
  for (const long long run : counts) {
    if (run < 0 || pos + run > total) throw DataError("run-length counts exceed the image");
    std::fill_n(mask.bits.begin() + pos, run, value);
    pos += run;
    value ^= 1;
  }
  if (pos != total) {
    throw DataError(fmt::format("run-length counts cover {} of {} pixels", pos, total));
  }
  return mask;
}

std::vector<long long> encode_rle(const BinaryMask& mask) {
  std::vector<long long> counts;
  std::uint8_t value = 0;
  long long run = 0;
  for (const auto bit : mask.bits) {
    if (bit != value) {
      counts.push_back(run);
      run = 0;
      value = bit;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

struct ObjectParse {
  ObjectInstance object;
  bool clamped = false;
  bool clipped = false;
};

ObjectParse parse_object(const json& node, int img_h, int img_w,
                         const std::vector<std::string>& vocab,
                         const std::unordered_map<std::string, int>& index) {
  if (!node.is_object()) throw DataError("subject/object must be an object");
  ObjectParse out;
  if (!node.contains("category")) throw DataError("missing 'category'");
  out.object.category_id = lookup(node.at("category"), vocab, index, "object category");

  const json& bb = node.contains("bbox") ? node.at("bbox") : json();
  if (!bb.is_array() || bb.size() != 4 ||
      !std::all_of(bb.begin(), bb.end(), [](const json& v) { return v.is_number(); })) {
    throw DataError("'bbox' must be [ymin, ymax, xmin, xmax]");
  }
  const auto coord = [&](std::size_t i) {
    return static_cast<int>(std::lround(bb[i].get<double>()));
  };
  const BBox raw{coord(2), coord(0), coord(3), coord(1)};
  if (raw.xmax <= raw.xmin || raw.ymax <= raw.ymin) {
    throw DataError(fmt::format("degenerate bbox: xmin={} xmax={} ymin={} ymax={}", raw.xmin,
                                raw.xmax, raw.ymin, raw.ymax));
  }
  const BBox box = clamp_box(raw, img_w, img_h);
  if (!box.valid()) throw DataError("bbox lies outside the image");
  out.object.bbox = box;
  out.clamped = !(box == raw);

  if (node.contains("mask") && !node.at("mask").is_null()) {
    const json& m = node.at("mask");
    BinaryMask mask;
    if (m.contains("counts")) {
      mask = decode_rle(m.at("counts").get<std::vector<long long>>(), img_h, img_w);
    } else if (m.contains("polygon")) {
      mask = rasterize_polygon(m.at("polygon").get<std::vector<double>>(), img_h, img_w);
    } else {
      throw DataError("'mask' needs 'counts' or 'polygon'");
    }
    for (int y = 0; y < img_h; ++y) {
      for (int x = 0; x < img_w; ++x) {
        if (mask.at(x, y) && !box.contains(x, y)) {
          mask.at(x, y) = 0;
          out.clipped = true;
        }
      }
    }
    out.object.mask = std::move(mask);
  }
  return out;
}

std::unordered_map<std::string, int> index_vocab(const std::vector<std::string>& vocab,
                                                 const fs::path& path) {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (!index.emplace(vocab[i], static_cast<int>(i)).second) {
      throw DataError(fmt::format("duplicate name '{}' in {}", vocab[i], path.string()));
    }
  }
  return index;
}

}  // namespace

DatasetSplit parse_annotations(const fs::path& path, const fs::path& image_root,
                               const VocabPaths& vocab, SplitName name, ParseReport* report) {
  DatasetSplit split;
  split.name = name;
  split.object_vocab = read_vocab(vocab.objects);
  split.predicate_vocab = read_vocab(vocab.predicates);
  const auto object_index = index_vocab(split.object_vocab, vocab.objects);
  const auto predicate_index = index_vocab(split.predicate_vocab, vocab.predicates);

  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open annotations {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (!doc.is_object()) {
    throw DataError(fmt::format("{}: top level must map image filenames to lists", path.string()));
  }

  ParseReport local;
  std::unordered_set<std::string> seen_ids;
  std::size_t record = 0;
  for (const auto& [image, relations] : doc.items()) {
    if (!relations.is_array()) {
      throw RecordError(record, image, "value must be a list of relationships");
    }
    ++local.images;
    if (relations.empty()) continue;
    const auto [img_h, img_w] = image_dimensions(image_root / image);
    const std::string stem = fs::path(image).stem().string();

    for (std::size_t r = 0; r < relations.size(); ++r, ++record) {
      const json& rel = relations[r];
      try {
        if (!rel.is_object()) throw DataError("relationship must be an object");
        if (!rel.contains("predicate") || !rel.contains("subject") || !rel.contains("object")) {
          throw DataError("relationship needs 'predicate', 'subject' and 'object'");
        }
        RelInstance inst;
        inst.image_id = image;
        inst.instance_id = rel.contains("id") ? rel.at("id").get<std::string>()
                                              : fmt::format("{}_{}", stem, r);
        inst.predicate_id =
            lookup(rel.at("predicate"), split.predicate_vocab, predicate_index, "predicate");
        auto subject = parse_object(rel.at("subject"), img_h, img_w, split.object_vocab,
                                    object_index);
        auto object = parse_object(rel.at("object"), img_h, img_w, split.object_vocab,
                                   object_index);
        for (const auto* p : {&subject, &object}) {
          if (p->clamped) {
            ++local.clamped_boxes;
            log_info("record {} ({}): bbox clamped to image bounds", record, image);
          }
          if (p->clipped) ++local.clipped_masks;
        }
        inst.subject = std::move(subject.object);
        inst.object = std::move(object.object);
        if (!seen_ids.insert(inst.instance_id).second) {
          throw DataError(fmt::format("duplicate instance id '{}'", inst.instance_id));
        }
        split.instances.push_back(std::move(inst));
      } catch (const RecordError&) {
        throw;
      } catch (const json::exception& e) {
        throw RecordError(record, image, e.what());
      } catch (const DataError& e) {
        throw RecordError(record, image, e.what());
      }
    }
  }
  local.instances = split.instances.size();
  if (local.clamped_boxes || local.clipped_masks) {
    log_info("{}: {} boxes clamped, {} masks clipped to their box", path.string(),
             local.clamped_boxes, local.clipped_masks);
  }
  if (report) *report = local;
  return split;
}

namespace {

json object_json(const ObjectInstance& o, const std::vector<std::string>& vocab) {
  json node;
  node["category"] = vocab.at(o.category_id);
  node["bbox"] = {o.bbox.ymin, o.bbox.ymax, o.bbox.xmin, o.bbox.xmax};
  if (o.mask) node["mask"] = {{"counts", encode_rle(*o.mask)}};
  return node;
}

}  // namespace

void write_annotations(const fs::path& path, const DatasetSplit& split) {
  json doc = json::object();
  for (const auto& inst : split.instances) {
    json rel;
    rel["id"] = inst.instance_id;
    rel["predicate"] = split.predicate_vocab.at(inst.predicate_id);
    rel["subject"] = object_json(inst.subject, split.object_vocab);
    rel["object"] = object_json(inst.object, split.object_vocab);
    doc[inst.image_id].push_back(std::move(rel));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << doc.dump(1) << '\n';
  if (!out) throw Error(fmt::format("failed writing {}", path.string()));
}

DatasetSplit derive_zero_shot(const DatasetSplit& train, const DatasetSplit& test) {
  if (train.object_vocab != test.object_vocab || train.predicate_vocab != test.predicate_vocab) {
    throw UsageError("train and test splits use different vocabularies");
  }
  std::set<Triple> seen;
  for (std::size_t i = 0; i < train.instances.size(); ++i) seen.insert(train.triple(i));

  DatasetSplit out;
  out.name = SplitName::ZeroShot;
  out.object_vocab = test.object_vocab;
  out.predicate_vocab = test.predicate_vocab;
  for (std::size_t i = 0; i < test.instances.size(); ++i) {
    if (!seen.contains(test.triple(i))) out.instances.push_back(test.instances[i]);
  }
  return out;
}

// Synthetic data --------------------------------------------------------------

const std::vector<std::string>& synthetic_predicates() {
  static const std::vector<std::string> names{"above", "below", "on the left of",
                                              "on the right of"};
  return names;
}

const std::vector<std::string>& synthetic_objects() {
  static const std::vector<std::string> names{"striped", "checkered", "dotted",
                                              "solid",   "gradient",  "speckled"};
  return names;
}

int spatial_predicate(double subject_cx, double subject_cy, double object_cx, double object_cy) {
  const double dx = subject_cx - object_cx;
  const double dy = subject_cy - object_cy;
  if (std::abs(dy) >= std::abs(dx)) return dy < 0 ? 0 : 1;
  return dx < 0 ? 2 : 3;
}

int spatial_predicate(const BBox& subject, const BBox& object) {
  // Doubled centres keep the comparison in exact integers.
  return spatial_predicate(subject.xmin + subject.xmax, subject.ymin + subject.ymax,
                           object.xmin + object.xmax, object.ymin + object.ymax);
}

namespace {

// Portable draws: the standard distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t v;
    do v = engine_();
    while (v >= limit);
    return lo + static_cast<int>(v % span);
  }

 private:
  std::mt19937_64 engine_;
};

struct Color {
  double r, g, b;
};

Color random_color(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

void put(Raster& img, int x, int y, const Color& c) {
  img.at(0, y, x) = c.r;
  img.at(1, y, x) = c.g;
  img.at(2, y, x) = c.b;
}

void paint_background(Raster& img, Rng& rng) {
  const int s = img.width();
  const Color base = random_color(rng, 0.25, 0.6);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double n = rng.uniform(-0.12, 0.12);
      put(img, x, y, {base.r + n, base.g + n, base.b + n});
    }
  }
  const int blobs = rng.integer(8, 16);
  for (int b = 0; b < blobs; ++b) {
    const int w = rng.integer(2, std::max(3, s / 8));
    const int h = rng.integer(2, std::max(3, s / 8));
    const int x0 = rng.integer(0, s - w);
    const int y0 = rng.integer(0, s - h);
    const Color c = random_color(rng, 0.0, 1.0);
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) put(img, x, y, c);
    }
  }
}

void paint_object(Raster& img, const BBox& box, int category, Rng& rng) {
  const Color a = random_color(rng, 0.55, 1.0);
  const Color b = random_color(rng, 0.0, 0.45);
  const int period = rng.integer(2, 5);
  for (int y = box.ymin; y < box.ymax; ++y) {
    for (int x = box.xmin; x < box.xmax; ++x) {
      const int lx = x - box.xmin;
      const int ly = y - box.ymin;
      bool first = true;
      double t = 0.0;
      switch (category) {
        case 0:  // striped
          first = (ly / period) % 2 == 0;
          break;
        case 1:  // checkered
          first = ((lx / period) + (ly / period)) % 2 == 0;
          break;
        case 2:  // dotted
          first = !(lx % (2 * period) == 0 && ly % (2 * period) == 0);
          break;
        case 3:  // solid
          break;
        case 4:  // gradient
          t = static_cast<double>(lx) / std::max(1, box.width() - 1);
          put(img, x, y, {a.r * (1 - t) + b.r * t, a.g * (1 - t) + b.g * t, a.b * (1 - t) + b.b * t});
          continue;
        default:  // speckled
          first = rng.uniform() < 0.7;
          break;
      }
      put(img, x, y, first ? a : b);
    }
  }
}

BBox random_box(Rng& rng, int s) {
  const int lo = std::max(2, s / 8);
  const int hi = std::max(lo + 1, s / 3);
  const int w = rng.integer(lo, hi);
  const int h = rng.integer(lo, hi);
  const int x0 = rng.integer(0, s - w);
  const int y0 = rng.integer(0, s - h);
  return {x0, y0, x0 + w, y0 + h};
}

// True when the relation read off the union crop after stretching it to a
// square still equals `label`.
bool survives_square_resize(const BBox& subject, const BBox& object, int label) {
  const BBox u = union_box(subject, object);
  const auto centre = [](int lo, int hi, int origin, int extent) {
    return (0.5 * (lo + hi) - origin) / extent;
  };
  return spatial_predicate(centre(subject.xmin, subject.xmax, u.xmin, u.width()),
                           centre(subject.ymin, subject.ymax, u.ymin, u.height()),
                           centre(object.xmin, object.xmax, u.xmin, u.width()),
                           centre(object.ymin, object.ymax, u.ymin, u.height())) == label;
}

}  // namespace

SyntheticData generate_synthetic(int n, std::uint64_t seed, int image_size,
                                 std::string_view id_prefix, const ImageSink& sink) {
  if (n < 1) throw UsageError(fmt::format("synthetic dataset size must be >= 1, got {}", n));
  if (image_size < 16) throw UsageError("synthetic image size must be >= 16");

  Rng rng(seed);
  SyntheticData out;
  out.split.name = SplitName::Train;
  out.split.object_vocab = synthetic_objects();
  out.split.predicate_vocab = synthetic_predicates();
  const int num_predicates = static_cast<int>(synthetic_predicates().size());
  const int num_objects = static_cast<int>(synthetic_objects().size());

  std::vector<int> cycle(num_predicates);
  for (int i = 0; i < n; ++i) {
    // Each block of four consecutive instances covers every predicate once.
    if (i % num_predicates == 0) {
      std::iota(cycle.begin(), cycle.end(), 0);
      for (int j = num_predicates - 1; j > 0; --j) std::swap(cycle[j], cycle[rng.integer(0, j)]);
    }
    const int target = cycle[i % num_predicates];

    BBox subject, object;
    do {
      subject = random_box(rng, image_size);
      object = random_box(rng, image_size);
    } while (subject == object ||
             (subject.xmin + subject.xmax == object.xmin + object.xmax &&
              subject.ymin + subject.ymax == object.ymin + object.ymax) ||
             spatial_predicate(subject, object) != target ||
             !survives_square_resize(subject, object, target));

    RelInstance inst;
    inst.image_id = fmt::format("{}_{:06d}.png", id_prefix, i);
    inst.instance_id = fmt::format("{}_{:06d}_0", id_prefix, i);
    inst.predicate_id = target;
    inst.subject = {rng.integer(0, num_objects - 1), subject,
                    rasterize_box(subject, image_size, image_size)};
    inst.object = {rng.integer(0, num_objects - 1), object,
                   rasterize_box(object, image_size, image_size)};

    Raster img(image_size, image_size, 3);
    paint_background(img, rng);
    paint_object(img, object, inst.object.category_id, rng);
    paint_object(img, subject, inst.subject.category_id, rng);
    for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);

    if (sink) {
      sink(inst.image_id, img);
    } else {
      out.images.emplace(inst.image_id, std::move(img));
    }
    out.split.instances.push_back(std::move(inst));
  }
  return out;
}

}  // namespace vrd
