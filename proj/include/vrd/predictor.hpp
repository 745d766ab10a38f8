#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vrd/evaluation.hpp"
#include "vrd/matrix.hpp"
#include "vrd/raster.hpp"
#include "vrd/transforms.hpp"

namespace vrd {

/// Side of the square grid rasters are averaged down to before the linear
/// model sees them.
inline constexpr int kFeatureGrid = 32;

/// Area-averages `image` onto a grid x grid lattice per channel and flattens
/// it plane by plane.
std::vector<double> extract_features(const Raster& image, int grid = kFeatureGrid);

/// Linear softmax classifier: p = softmax(x W + b).
struct SoftmaxModel {
  int channels = 0;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  Matrix weights;  // feature_dim x num_classes
  std::vector<double> bias;

  /// Zero-initialised model over grid x grid x channels features.
  static SoftmaxModel zeros(int channels, std::size_t num_classes, int grid = kFeatureGrid);
  static SoftmaxModel zeros_dim(std::size_t feature_dim, std::size_t num_classes);

  friend bool operator==(const SoftmaxModel&, const SoftmaxModel&) = default;
};

/// Affine scores x W + b for each row of `features`.
Matrix logits(const SoftmaxModel& model, const Matrix& features);
/// Row-wise softmax, max-shifted.
Matrix softmax_rows(const Matrix& logits);
/// Probabilities for each row of `features`. Throws UsageError on a
/// dimension mismatch.
Matrix forward(const SoftmaxModel& model, const Matrix& features);

struct LossGradient {
  double loss = 0.0;  // mean categorical cross-entropy
  Matrix grad_weights;
  std::vector<double> grad_bias;
};

/// Mean cross-entropy over the rows `batch` of `features` and its gradient.
LossGradient loss_and_gradient(const SoftmaxModel& model, const Matrix& features,
                               std::span<const int> labels, std::span<const std::size_t> batch);

struct TrainPhase {
  double learning_rate = 0.0;
  int epochs = 0;
};

struct TrainConfig {
  int batch_size = 10;
  double momentum = 0.9;
  std::vector<TrainPhase> phases = {{1e-3, 5}, {1e-3, 5}, {1e-5, 5}};
  std::uint64_t seed = 0;

  void validate() const;
  /// Normalised `key=value` lines, sorted by key.
  std::string canonical() const;
};

/// Applies `key=value` lines (batch_size, momentum, phases, seed) on top of
/// `base`. `phases` is a comma list of lr:epochs pairs. '#' starts a comment.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});

struct EpochLog {
  int phase = 0;  // 1-based
  int epoch = 0;  // 1-based, within the phase
  double learning_rate = 0.0;
  double mean_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch SGD with Nesterov momentum over the phase schedule, starting
/// from `model`. Each epoch reshuffles from a stream seeded by config.seed.
/// Throws Error if the loss becomes non-finite.
SoftmaxModel train(const TrainConfig& config, SoftmaxModel model, const Matrix& features,
                   std::span<const int> labels, const EpochCallback& on_epoch = {});

/// Fisher-Yates shuffle driven by a 64-bit Mersenne Twister; identical on
/// every platform.
void deterministic_shuffle(std::vector<std::size_t>& order, std::mt19937_64& engine);

/// Checkpoint layout, little-endian: "VRDSMX\0\0", u32 version, u32 channels,
/// u64 feature_dim, u64 num_classes, f64 weights row-major, f64 bias.
void save_model(const std::filesystem::path& path, const SoftmaxModel& model);
SoftmaxModel load_model(const std::filesystem::path& path);

/// Loads the rasters listed in an emitted dataset's manifest as features.
struct FeatureSet {
  std::vector<std::string> instance_ids;
  std::vector<int> labels;
  Matrix features;
  int channels = 0;
};

FeatureSet load_feature_set(const std::filesystem::path& dataset_dir);

/// Scores every instance of an emitted dataset.
ScoreMatrix predict_scores(const SoftmaxModel& model, const FeatureSet& data);

}  // namespace vrd
