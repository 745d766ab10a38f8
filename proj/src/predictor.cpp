#include "vrd/predictor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "vrd/error.hpp"
#include "vrd/image_io.hpp"
#include "vrd/simd.hpp"

namespace vrd {

namespace fs = std::filesystem;

// Features --------------------------------------------------------------------

namespace {

struct Span1D {
  int first;
  std::vector<double> weights;  // per source index starting at `first`
};

// Overlap of source pixel [i, i+1) with output cell [o*in/out, (o+1)*in/out),
// normalised so each cell's weights sum to 1.
std::vector<Span1D> area_weights(int in, int out) {
  std::vector<Span1D> cells(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(in, static_cast<int>(std::ceil(hi)));
    cells[o].first = first;
    for (int i = first; i < last; ++i) {
      cells[o].weights.push_back((std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i))) / scale);
    }
  }
  return cells;
}

}  // namespace

std::vector<double> extract_features(const Raster& image, int grid) {
  const auto ys = area_weights(image.height(), grid);
  const auto xs = area_weights(image.width(), grid);
  std::vector<double> out(static_cast<std::size_t>(grid) * grid * image.channels(), 0.0);
  std::size_t k = 0;
  for (int c = 0; c < image.channels(); ++c) {
    for (int gy = 0; gy < grid; ++gy) {
      for (int gx = 0; gx < grid; ++gx, ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < ys[gy].weights.size(); ++i) {
          const auto row = image.row(c, ys[gy].first + static_cast<int>(i));
          double racc = 0.0;
          for (std::size_t j = 0; j < xs[gx].weights.size(); ++j) {
            racc += xs[gx].weights[j] * row[xs[gx].first + j];
          }
          acc += ys[gy].weights[i] * racc;
        }
        out[k] = acc;
      }
    }
  }
  return out;
}

// Model -----------------------------------------------------------------------

SoftmaxModel SoftmaxModel::zeros_dim(std::size_t feature_dim, std::size_t num_classes) {
  if (feature_dim == 0 || num_classes < 2) {
    throw UsageError(fmt::format("model needs feature_dim >= 1 and >= 2 classes, got {} and {}",
                                 feature_dim, num_classes));
  }
  SoftmaxModel m;
  m.feature_dim = feature_dim;
  m.num_classes = num_classes;
  m.weights = Matrix(feature_dim, num_classes);
  m.bias.assign(num_classes, 0.0);
  return m;
}

SoftmaxModel SoftmaxModel::zeros(int channels, std::size_t num_classes, int grid) {
  SoftmaxModel m = zeros_dim(static_cast<std::size_t>(grid) * grid * channels, num_classes);
  m.channels = channels;
  return m;
}

namespace {

void check_dims(const SoftmaxModel& model, const Matrix& features) {
  if (features.cols != model.feature_dim) {
    throw UsageError(fmt::format("features have {} columns, model expects {}", features.cols,
                                 model.feature_dim));
  }
}

void logits_row(const SoftmaxModel& model, std::span<const double> x, std::span<double> out) {
  const auto& kern = simd::kernels();
  std::copy(model.bias.begin(), model.bias.end(), out.begin());
  for (std::size_t f = 0; f < x.size(); ++f) {
    if (x[f] == 0.0) continue;
    kern.axpy(x[f], model.weights.row(f).data(), out.data(), model.num_classes);
  }
}

void softmax_inplace(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

// log(sum(exp(z)))
double log_sum_exp(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (const double v : z) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

}  // namespace

Matrix logits(const SoftmaxModel& model, const Matrix& features) {
  check_dims(model, features);
  Matrix out(features.rows, model.num_classes);
  for (std::size_t r = 0; r < features.rows; ++r) logits_row(model, features.row(r), out.row(r));
  return out;
}

Matrix softmax_rows(const Matrix& z) {
  Matrix out = z;
  for (std::size_t r = 0; r < out.rows; ++r) softmax_inplace(out.row(r));
  return out;
}

Matrix forward(const SoftmaxModel& model, const Matrix& features) {
  return softmax_rows(logits(model, features));
}

LossGradient loss_and_gradient(const SoftmaxModel& model, const Matrix& features,
                               std::span<const int> labels, std::span<const std::size_t> batch) {
  check_dims(model, features);
  if (batch.empty()) throw UsageError("empty batch");
  const auto& kern = simd::kernels();
  const std::size_t classes = model.num_classes;
  LossGradient out{0.0, Matrix(model.feature_dim, classes), std::vector<double>(classes, 0.0)};
  const double inv = 1.0 / static_cast<double>(batch.size());

  std::vector<double> z(classes);
  for (const std::size_t r : batch) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw UsageError(fmt::format("label {} outside [0, {})", label, classes));
    }
    const auto x = features.row(r);
    logits_row(model, x, z);
    out.loss += log_sum_exp(z) - z[label];
    softmax_inplace(z);
    z[label] -= 1.0;
    for (double& v : z) v *= inv;
    for (std::size_t c = 0; c < classes; ++c) out.grad_bias[c] += z[c];
    for (std::size_t f = 0; f < x.size(); ++f) {
      if (x[f] == 0.0) continue;
      kern.axpy(x[f], z.data(), out.grad_weights.row(f).data(), classes);
    }
  }
  out.loss *= inv;
  return out;
}

// Training --------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError(fmt::format("batch_size must be >= 1, got {}", batch_size));
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw UsageError(fmt::format("momentum must be in [0, 1), got {}", momentum));
  }
  if (phases.empty()) throw UsageError("training schedule has no phases");
  for (const auto& p : phases) {
    if (!(p.learning_rate > 0.0)) throw UsageError("learning rates must be > 0");
    if (p.epochs < 1) throw UsageError("every phase needs >= 1 epoch");
  }
}

std::string TrainConfig::canonical() const {
  std::string phase_text;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    if (i) phase_text += ',';
    phase_text += fmt::format("{:.17g}:{}", phases[i].learning_rate, phases[i].epochs);
  }
  return fmt::format("batch_size={}\nmomentum={:.17g}\nphases={}\nseed={}\n", batch_size, momentum,
                     phase_text, seed);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& text, std::string_view key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(fmt::format("config key '{}': '{}' is not a number", key, text));
}

long long parse_integer(const std::string& text, std::string_view key) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(fmt::format("config key '{}': '{}' is not an integer", key, text));
}

}  // namespace

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(fmt::format("config line {}: expected key=value", line_no));
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "batch_size") {
      base.batch_size = static_cast<int>(parse_integer(value, key));
    } else if (key == "momentum") {
      base.momentum = parse_number(value, key);
    } else if (key == "seed") {
      base.seed = static_cast<std::uint64_t>(parse_integer(value, key));
    } else if (key == "phases") {
      base.phases.clear();
      std::istringstream list(value);
      std::string item;
      while (std::getline(list, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
          throw UsageError(fmt::format("config key 'phases': '{}' is not lr:epochs", item));
        }
        base.phases.push_back({parse_number(trim(item.substr(0, colon)), key),
                               static_cast<int>(parse_integer(trim(item.substr(colon + 1)), key))});
      }
    } else {
      throw UsageError(fmt::format("config line {}: unknown key '{}'", line_no, key));
    }
  }
  base.validate();
  return base;
}

void deterministic_shuffle(std::vector<std::size_t>& order, std::mt19937_64& engine) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::uint64_t span = i;
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t v;
    do v = engine();
    while (v >= limit);
    std::swap(order[i - 1], order[v % span]);
  }
}

SoftmaxModel train(const TrainConfig& config, SoftmaxModel model, const Matrix& features,
                   std::span<const int> labels, const EpochCallback& on_epoch) {
  config.validate();
  check_dims(model, features);
  if (features.rows == 0) throw UsageError("no training data");
  if (labels.size() != features.rows) throw UsageError("labels and features differ in length");

  const auto& kern = simd::kernels();
  std::mt19937_64 engine(config.seed);
  std::vector<std::size_t> order(features.rows);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (std::size_t p = 0; p < config.phases.size(); ++p) {
    const TrainPhase& phase = config.phases[p];
    // Velocity restarts at zero in every phase.
    std::vector<double> vel_w(model.weights.values.size(), 0.0);
    std::vector<double> vel_b(model.bias.size(), 0.0);
    for (int e = 0; e < phase.epochs; ++e) {
      deterministic_shuffle(order, engine);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::span<const std::size_t> idx(order.data() + start,
                                               std::min(batch, order.size() - start));
        const LossGradient g = loss_and_gradient(model, features, labels, idx);
        if (!std::isfinite(g.loss)) {
          throw Error(fmt::format("non-finite loss {} in phase {} epoch {} batch {}", g.loss, p + 1,
                                  e + 1, batches + 1));
        }
        kern.nesterov_step(model.weights.values.data(), vel_w.data(), g.grad_weights.values.data(),
                           phase.learning_rate, config.momentum, vel_w.size());
        kern.nesterov_step(model.bias.data(), vel_b.data(), g.grad_bias.data(), phase.learning_rate,
                           config.momentum, vel_b.size());
        loss_sum += g.loss;
        ++batches;
      }
      if (on_epoch) {
        on_epoch({static_cast<int>(p) + 1, e + 1, phase.learning_rate, loss_sum / batches});
      }
    }
  }
  return model;
}

// Checkpoints -----------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'V', 'R', 'D', 'S', 'M', 'X', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) {
    throw DataError(fmt::format("{}: truncated checkpoint", path.string()));
  }
  return value;
}

}  // namespace

void save_model(const fs::path& path, const SoftmaxModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.channels));
  put<std::uint64_t>(out, model.feature_dim);
  put<std::uint64_t>(out, model.num_classes);
  out.write(reinterpret_cast<const char*>(model.weights.values.data()),
            static_cast<std::streamsize>(model.weights.values.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(model.bias.data()),
            static_cast<std::streamsize>(model.bias.size() * sizeof(double)));
  if (!out) throw Error(fmt::format("failed writing {}", path.string()));
}

SoftmaxModel load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("model not found: {}", path.string()));
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(fmt::format("{}: not a model checkpoint", path.string()));
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw DataError(fmt::format("{}: unsupported checkpoint version {}", path.string(), version));
  }
  const auto channels = get<std::uint32_t>(in, path);
  const auto dim = get<std::uint64_t>(in, path);
  const auto classes = get<std::uint64_t>(in, path);
  if (dim == 0 || classes < 2 || dim > (1u << 26) || classes > (1u << 16)) {
    throw DataError(fmt::format("{}: implausible dimensions {}x{}", path.string(), dim, classes));
  }
  SoftmaxModel m = SoftmaxModel::zeros_dim(dim, classes);
  m.channels = static_cast<int>(channels);
  if (!in.read(reinterpret_cast<char*>(m.weights.values.data()),
               static_cast<std::streamsize>(m.weights.values.size() * sizeof(double))) ||
      !in.read(reinterpret_cast<char*>(m.bias.data()),
               static_cast<std::streamsize>(m.bias.size() * sizeof(double)))) {
    throw DataError(fmt::format("{}: truncated checkpoint", path.string()));
  }
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(m.weights.values.begin(), m.weights.values.end(), finite) ||
      !std::all_of(m.bias.begin(), m.bias.end(), finite)) {
    throw DataError(fmt::format("{}: checkpoint holds non-finite parameters", path.string()));
  }
  return m;
}

// Datasets --------------------------------------------------------------------

FeatureSet load_feature_set(const fs::path& dataset_dir) {
  const auto rows = read_manifest(dataset_dir / kManifestFile);
  FeatureSet out;
  std::vector<double> flat;
  std::size_t dim = 0;
  for (const auto& row : rows) {
    const Raster image = read_png(dataset_dir / row.relative_path);
    if (out.instance_ids.empty()) {
      out.channels = image.channels();
    } else if (image.channels() != out.channels) {
      throw DataError(fmt::format("{}: channel count differs from the rest of the dataset",
                                  row.relative_path));
    }
    const auto f = extract_features(image);
    dim = f.size();
    flat.insert(flat.end(), f.begin(), f.end());
    out.instance_ids.push_back(row.instance_id);
    out.labels.push_back(row.predicate_id);
  }
  out.features.rows = rows.size();
  out.features.cols = dim;
  out.features.values = std::move(flat);
  return out;
}

ScoreMatrix predict_scores(const SoftmaxModel& model, const FeatureSet& data) {
  if (data.channels != model.channels && model.channels != 0) {
    throw UsageError(fmt::format("model expects {}-channel input, dataset has {}", model.channels,
                                 data.channels));
  }
  ScoreMatrix out;
  out.instance_ids = data.instance_ids;
  out.scores = data.instance_ids.empty() ? Matrix(0, model.num_classes) : forward(model, data.features);
  return out;
}

}  // namespace vrd
