#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "support.hpp"
#include "vrd/error.hpp"
#include "vrd/predictor.hpp"

namespace {

vrd::Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  vrd::Matrix m(rows, cols);
  for (double& v : m.values) v = dist(rng);
  return m;
}

vrd::SoftmaxModel random_model(std::mt19937_64& rng, std::size_t dim, std::size_t classes) {
  auto model = vrd::SoftmaxModel::zeros_dim(dim, classes);
  model.weights = random_matrix(rng, dim, classes, 0.3);
  std::normal_distribution<double> dist(0.0, 0.3);
  for (double& b : model.bias) b = dist(rng);
  return model;
}

double batch_loss(const vrd::SoftmaxModel& model, const vrd::Matrix& x, const std::vector<int>& labels,
                  const std::vector<std::size_t>& batch) {
  return vrd::loss_and_gradient(model, x, labels, batch).loss;
}

// Two well-separated Gaussian clouds per class in `dim` dimensions.
void separable_problem(std::mt19937_64& rng, std::size_t n, std::size_t dim, int classes,
                       vrd::Matrix& x, std::vector<int>& labels) {
  std::normal_distribution<double> noise(0.0, 0.1);
  x = vrd::Matrix(n, dim);
  labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % classes);
    for (std::size_t d = 0; d < dim; ++d) x(i, d) = noise(rng);
    x(i, static_cast<std::size_t>(labels[i]) % dim) += 1.0;
  }
}

}  // namespace

TEST_CASE("zero model predicts the uniform distribution") {
  std::mt19937_64 rng(1);
  const auto x = random_matrix(rng, 7, 12);
  const auto p = vrd::forward(vrd::SoftmaxModel::zeros_dim(12, 5), x);
  for (double v : p.values) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(2);
  const auto p = vrd::softmax_rows(random_matrix(rng, 30, 9, 50.0));
  for (std::size_t r = 0; r < p.rows; ++r) {
    double sum = 0.0;
    for (double v : p.row(r)) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("two-class softmax by hand") {
  vrd::Matrix z(1, 2);
  z(0, 0) = 1.0;
  z(0, 1) = 3.0;
  const auto p = vrd::softmax_rows(z);
  CHECK(p(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-14));

  vrd::Matrix big(1, 2);
  big(0, 0) = 1000.0;
  big(0, 1) = 1000.0;
  CHECK(vrd::softmax_rows(big)(0, 0) == 0.5);
}

TEST_CASE("initial loss is ln C at uniform output") {
  std::mt19937_64 rng(3);
  for (std::size_t classes : {2, 4, 70}) {
    const auto x = random_matrix(rng, 20, 16);
    std::vector<int> labels(20);
    for (auto& l : labels) l = static_cast<int>(rng() % classes);
    std::vector<std::size_t> batch(20);
    std::iota(batch.begin(), batch.end(), 0);
    const double loss = batch_loss(vrd::SoftmaxModel::zeros_dim(16, classes), x, labels, batch);
    CHECK(std::abs(loss - std::log(static_cast<double>(classes))) < 0.01);
  }
  CHECK(std::log(70.0) == doctest::Approx(4.2485).epsilon(1e-4));
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(4);
  const std::size_t dim = 24, classes = 6, n = 60;
  const auto x = random_matrix(rng, n, dim);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng() % classes);
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    auto model = random_model(rng, dim, classes);
    std::vector<std::size_t> batch(10);
    for (auto& b : batch) b = rng() % n;
    const auto g = vrd::loss_and_gradient(model, x, labels, batch);
    double worst = 0.0;
    const auto rel = [&](double analytic, double numeric) {
      return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    };
    for (std::size_t i = 0; i < model.weights.values.size(); ++i) {
      const double saved = model.weights.values[i];
      model.weights.values[i] = saved + h;
      const double up = batch_loss(model, x, labels, batch);
      model.weights.values[i] = saved - h;
      const double down = batch_loss(model, x, labels, batch);
      model.weights.values[i] = saved;
      worst = std::max(worst, rel(g.grad_weights.values[i], (up - down) / (2 * h)));
    }
    for (std::size_t i = 0; i < classes; ++i) {
      const double saved = model.bias[i];
      model.bias[i] = saved + h;
      const double up = batch_loss(model, x, labels, batch);
      model.bias[i] = saved - h;
      const double down = batch_loss(model, x, labels, batch);
      model.bias[i] = saved;
      worst = std::max(worst, rel(g.grad_bias[i], (up - down) / (2 * h)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("training separates a separable toy problem") {
  std::mt19937_64 rng(5);
  vrd::Matrix x;
  std::vector<int> labels;
  separable_problem(rng, 200, 8, 4, x, labels);
  vrd::TrainConfig config;
  config.phases = {{0.1, 20}};
  std::vector<double> losses;
  const auto model = vrd::train(config, vrd::SoftmaxModel::zeros_dim(8, 4), x, labels,
                                [&](const vrd::EpochLog& log) { losses.push_back(log.mean_loss); });
  CHECK(losses.size() == 20);
  CHECK(losses.back() < losses.front());
  const auto p = vrd::forward(model, x);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < p.rows; ++r) {
    const auto row = p.row(r);
    correct += std::max_element(row.begin(), row.end()) - row.begin() == labels[r];
  }
  CHECK(correct == 200);
}

TEST_CASE("adding a constant to every logit leaves predictions unchanged") {
  std::mt19937_64 rng(6);
  auto model = random_model(rng, 10, 5);
  const auto x = random_matrix(rng, 8, 10);
  const auto p = vrd::forward(model, x);
  for (double& b : model.bias) b += 123.0;
  const auto q = vrd::forward(model, x);
  for (std::size_t i = 0; i < p.values.size(); ++i) CHECK(q.values[i] == doctest::Approx(p.values[i]).epsilon(1e-10));
}

TEST_CASE("zero momentum reduces to plain SGD") {
  std::mt19937_64 rng(7);
  vrd::Matrix x;
  std::vector<int> labels;
  separable_problem(rng, 30, 6, 3, x, labels);
  vrd::TrainConfig config;
  config.momentum = 0.0;
  config.batch_size = 7;
  config.phases = {{0.05, 3}};
  config.seed = 99;
  const auto trained = vrd::train(config, vrd::SoftmaxModel::zeros_dim(6, 3), x, labels);

  auto model = vrd::SoftmaxModel::zeros_dim(6, 3);
  std::mt19937_64 engine(config.seed);
  std::vector<std::size_t> order(30);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < 3; ++epoch) {
    vrd::deterministic_shuffle(order, engine);
    for (std::size_t start = 0; start < order.size(); start += 7) {
      const std::vector<std::size_t> batch(order.begin() + start,
                                           order.begin() + std::min<std::size_t>(start + 7, order.size()));
      const auto g = vrd::loss_and_gradient(model, x, labels, batch);
      for (std::size_t i = 0; i < model.weights.values.size(); ++i) {
        model.weights.values[i] -= 0.05 * g.grad_weights.values[i];
      }
      for (std::size_t i = 0; i < 3; ++i) model.bias[i] -= 0.05 * g.grad_bias[i];
    }
  }
  for (std::size_t i = 0; i < model.weights.values.size(); ++i) {
    CHECK(trained.weights.values[i] == doctest::Approx(model.weights.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("training is deterministic per seed") {
  std::mt19937_64 rng(8);
  vrd::Matrix x;
  std::vector<int> labels;
  separable_problem(rng, 50, 5, 3, x, labels);
  vrd::TrainConfig config;
  config.seed = 3;
  const auto a = vrd::train(config, vrd::SoftmaxModel::zeros_dim(5, 3), x, labels);
  const auto b = vrd::train(config, vrd::SoftmaxModel::zeros_dim(5, 3), x, labels);
  CHECK(a == b);
  config.seed = 4;
  CHECK_FALSE(vrd::train(config, vrd::SoftmaxModel::zeros_dim(5, 3), x, labels) == a);
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir;
  std::mt19937_64 rng(9);
  auto model = random_model(rng, 3 * 4 * 4, 7);
  model.channels = 3;
  vrd::save_model(dir / "m.bin", model);
  CHECK(vrd::load_model(dir / "m.bin") == model);
  const auto bytes = testing::slurp(dir / "m.bin");
  CHECK(bytes.size() == 8 + 4 + 4 + 8 + 8 + 8 * (48 * 7 + 7));
  CHECK(bytes.substr(0, 6) == "VRDSMX");
  testing::spit(dir / "bad.bin", bytes.substr(0, 40));
  CHECK_THROWS_AS(vrd::load_model(dir / "bad.bin"), vrd::DataError);
}

TEST_CASE("extract_features area-averages") {
  vrd::Raster img(4, 4, 1);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) img.at(0, y, x) = y * 4 + x;
  }
  const auto f = vrd::extract_features(img, 2);
  REQUIRE(f.size() == 4);
  CHECK(f[0] == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(f[3] == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
  const vrd::Raster flat(224, 224, 3, 0.25);
  for (double v : vrd::extract_features(flat)) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("train config parsing") {
  const auto c = vrd::parse_train_config("# comment\nbatch_size = 4\nphases=0.01:2, 0.001:1\nseed=12\n");
  CHECK(c.batch_size == 4);
  CHECK(c.momentum == 0.9);
  REQUIRE(c.phases.size() == 2);
  CHECK(c.phases[1].learning_rate == 0.001);
  CHECK(c.phases[1].epochs == 1);
  CHECK(c.seed == 12);
  CHECK(vrd::parse_train_config(c.canonical()).canonical() == c.canonical());
  CHECK_THROWS_AS(vrd::parse_train_config("colour=red"), vrd::UsageError);
  CHECK_THROWS_AS(vrd::parse_train_config("momentum=1.5"), vrd::UsageError);
  CHECK_THROWS_AS(vrd::parse_train_config("batch_size=0"), vrd::UsageError);
}
