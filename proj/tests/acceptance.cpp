// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "cli.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "vrd/evaluation.hpp"
#include "vrd/predictor.hpp"
#include "vrd/stats.hpp"
#include "vrd/transforms.hpp"

namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kTransformSeconds = 5.0;
constexpr double kKernelSumTol = 1e-9;
constexpr double kFixedPointTol = 1e-6;
constexpr double kDenseTol = 1e-6;
constexpr double kMetricSeconds = 10.0;
constexpr double kSupportWeightedTol = 1e-12;
constexpr double kTwoGroupTol = 1e-3;
constexpr double kMonteCarloTol = 0.02;
constexpr int kMonteCarloSamples = 1000000;
constexpr int kLetterSets = 200;
constexpr double kGradientTol = 1e-4;
constexpr double kInitialLossTol = 0.01;
constexpr double kEndToEndRecall = 95.0;
constexpr double kEndToEndSeconds = 300.0;

struct Verdict {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double max_abs_diff(const vrd::Raster& a, const vrd::Raster& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

Verdict transform_oracle() {
  const auto start = std::chrono::steady_clock::now();
  int exact = 0, total = 0;
  for (int i = 0; i < 25; ++i) {
    const auto tc = oracle::crafted_case(i);
    for (const vrd::Method m : vrd::kAllMethods) {
      ++total;
      exact += vrd::compose(tc.instance, tc.image, m).crop == oracle::reference_compose(tc.instance, tc.image, m);
    }
  }
  const double t = seconds_since(start);
  return {exact == total && t < kTransformSeconds,
          fmt::format("{}/{} method-image pairs byte-exact in {:.2f} s (limit {} s)", exact, total, t,
                      kTransformSeconds)};
}

Verdict gaussian_suite() {
  double worst_sum = 0.0, worst_fixed = 0.0, worst_dense = 0.0;
  for (const auto& [sigma, side] : {std::pair{3.0, 19}, {5.0, 31}, {7.0, 43}}) {
    const auto k = vrd::gaussian_kernel(sigma, side);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(k.weights.begin(), k.weights.end(), 0.0) - 1.0));
    const vrd::Raster flat(40, 40, 3, 0.42);
    worst_fixed = std::max(worst_fixed, max_abs_diff(vrd::blur(flat, k), flat));
  }
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    vrd::Raster img(32, 32, 3);
    for (double& v : img.data()) v = dist(rng);
    const double sigma = 3.0 + 2.0 * (i % 3);
    const auto k = vrd::gaussian_kernel(sigma, 2 * static_cast<int>(std::ceil(3 * sigma)) + 1);
    worst_dense = std::max(worst_dense, max_abs_diff(vrd::blur(img, k), oracle::dense_blur(img, k.weights)));
  }
  return {worst_sum <= kKernelSumTol && worst_fixed <= kFixedPointTol && worst_dense <= kDenseTol,
          fmt::format("|sum-1| {:.1e} (tol {:.0e}), constant image {:.1e} (tol {:.0e}), dense vs separable "
                      "{:.1e} (tol {:.0e})",
                      worst_sum, kKernelSumTol, worst_fixed, kFixedPointTol, worst_dense, kDenseTol)};
}

Verdict metric_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(30);
  const std::size_t n = 1000, classes = 12;
  vrd::ScoreMatrix scores;
  scores.scores = vrd::Matrix(n, classes);
  vrd::DatasetSplit split;
  for (std::size_t c = 0; c < classes; ++c) split.predicate_vocab.push_back(fmt::format("p{}", c));
  std::vector<std::vector<double>> rows(n, std::vector<double>(classes));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    vrd::RelInstance r;
    r.instance_id = fmt::format("i{}", i);
    r.predicate_id = labels[i] = static_cast<int>(rng() % classes);
    split.instances.push_back(r);
    scores.instance_ids.push_back(r.instance_id);
    for (std::size_t c = 0; c < classes; ++c) rows[i][c] = scores.scores(i, c) = static_cast<double>(rng() % 8);
  }
  bool match = true, monotone = true;
  double previous = 0.0, worst_weighted = 0.0;
  for (const int k : {1, 2, 3, 5, 8, 10}) {
    const double r = vrd::recall_at_k(scores, split, k);
    match = match && r == oracle::sorted_recall(rows, labels, k);
    monotone = monotone && r >= previous;
    previous = r;
    double weighted = 0.0;
    for (const auto& [p, cr] : vrd::per_predicate_recall(scores, split, k)) weighted += cr.recall * cr.support;
    worst_weighted = std::max(worst_weighted, std::abs(weighted / n - r));
  }
  const double t = seconds_since(start);
  return {match && monotone && worst_weighted <= kSupportWeightedTol && t < kMetricSeconds,
          fmt::format("sort oracle {}, monotone {}, support-weighted gap {:.1e} (tol {:.0e}), {:.2f} s (limit {} s)",
                      match ? "equal" : "DIFFERS", monotone ? "yes" : "NO", worst_weighted,
                      kSupportWeightedTol, t, kMetricSeconds)};
}

Verdict tukey_suite() {
  namespace stats = vrd::stats;
  double worst_t = 0.0;
  for (const double df : {5.0, 10.0, 30.0}) {
    const double t = boost::math::quantile(boost::math::students_t(df), 0.975);
    worst_t = std::max(worst_t, std::abs(stats::studentized_range_quantile(0.05, 2, df) - std::sqrt(2.0) * t));
  }

  const int k = 3, df = 10;
  std::mt19937_64 rng(40);
  std::normal_distribution<double> z(0.0, 1.0);
  std::chi_squared_distribution<double> chi(df);
  std::vector<double> sample(kMonteCarloSamples);
  for (double& q : sample) {
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < k; ++i) {
      const double v = z(rng);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    q = (hi - lo) / std::sqrt(chi(rng) / df);
  }
  const auto at = sample.begin() + static_cast<std::ptrdiff_t>(0.95 * sample.size());
  std::nth_element(sample.begin(), at, sample.end());
  const double mc_gap = std::abs(*at - stats::studentized_range_quantile(0.05, k, df));

  int sound = 0;
  std::uniform_real_distribution<double> centre(20.0, 60.0);
  std::normal_distribution<double> noise(0.0, 1.5);
  for (int set = 0; set < kLetterSets; ++set) {
    std::vector<stats::RunGroup> groups;
    const int g = 2 + static_cast<int>(rng() % 7);
    for (int i = 0; i < g; ++i) {
      stats::RunGroup group{"lin", fmt::format("m{}", i), {}};
      const double mu = centre(rng);
      const int runs = 2 + static_cast<int>(rng() % 5);
      for (int r = 0; r < runs; ++r) group.values.push_back(std::clamp(mu + noise(rng), 0.0, 100.0));
      groups.push_back(group);
    }
    const auto result = stats::tukey_hsd(groups);
    bool ok = true;
    for (std::size_t i = 0; i < result.letters.size(); ++i) {
      ok = ok && !result.letters[i].empty();
      for (std::size_t j = i + 1; j < result.letters.size(); ++j) {
        bool shared = false;
        for (const auto& l : result.letters[i]) {
          shared = shared || std::count(result.letters[j].begin(), result.letters[j].end(), l) > 0;
        }
        ok = ok && shared == !result.significant[i][j];
      }
    }
    sound += ok;
  }
  return {worst_t <= kTwoGroupTol && mc_gap <= kMonteCarloTol && sound == kLetterSets,
          fmt::format("sqrt(2) t gap {:.1e} (tol {:.0e}), Monte Carlo gap {:.4f} over {} draws (tol {}), "
                      "letters sound on {}/{} sets",
                      worst_t, kTwoGroupTol, mc_gap, kMonteCarloSamples, kMonteCarloTol, sound, kLetterSets)};
}

Verdict gradient_check() {
  std::mt19937_64 rng(50);
  std::normal_distribution<double> dist(0.0, 1.0);
  const std::size_t dim = 32, classes = 6, n = 50;
  vrd::Matrix x(n, dim);
  for (double& v : x.values) v = dist(rng);
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(rng() % classes);
  double worst = 0.0;
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    auto model = vrd::SoftmaxModel::zeros_dim(dim, classes);
    for (double& w : model.weights.values) w = 0.3 * dist(rng);
    for (double& b : model.bias) b = 0.3 * dist(rng);
    std::vector<std::size_t> batch(5);
    for (auto& b : batch) b = rng() % n;
    const auto g = vrd::loss_and_gradient(model, x, labels, batch);
    const auto probe = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = vrd::loss_and_gradient(model, x, labels, batch).loss;
      param = saved - h;
      const double down = vrd::loss_and_gradient(model, x, labels, batch).loss;
      param = saved;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
    };
    for (std::size_t i = 0; i < model.weights.values.size(); ++i) probe(model.weights.values[i], g.grad_weights.values[i]);
    for (std::size_t i = 0; i < classes; ++i) probe(model.bias[i], g.grad_bias[i]);
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  double worst_loss = 0.0;
  for (const std::size_t c : {4, 70}) {
    std::vector<int> l(n);
    for (int& v : l) v = static_cast<int>(rng() % c);
    const double loss = vrd::loss_and_gradient(vrd::SoftmaxModel::zeros_dim(dim, c), x, l, all).loss;
    worst_loss = std::max(worst_loss, std::abs(loss - std::log(static_cast<double>(c))));
  }
  return {worst < kGradientTol && worst_loss <= kInitialLossTol,
          fmt::format("max relative gradient error {:.1e} over 5 batches (tol {:.0e}), |loss - ln C| {:.1e} "
                      "(tol {})",
                      worst, kGradientTol, worst_loss, kInitialLossTol)};
}

// Runs the tool in-process; throws with its error line on failure.
void tool(const fs::path& root, std::vector<std::string> args) {
  args.push_back("--out");
  args.push_back(root.string());
  std::ostringstream out, err;
  if (vrd::cli::run(args, out, err) != 0) throw std::runtime_error(err.str());
}

double recall_at_1(const fs::path& root, const std::string& method) {
  std::ifstream in(root / "reports" / fmt::format("eval_{}_test.csv", method));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() == 4 && f[2] == "1") return std::stod(f[3]);
  }
  throw std::runtime_error("no R@1 row for " + method);
}

void pipeline(const fs::path& root, int n, int n_test) {
  tool(root, {"synth", "--n", std::to_string(n), "--n-test", std::to_string(n_test), "--seed", "7"});
  for (const std::string method : {"UnionWBB", "Union"}) {
    tool(root, {"preprocess", "--method", method, "--split", "train"});
    tool(root, {"preprocess", "--method", method, "--split", "test"});
    tool(root, {"train", "--method", method, "--seed", "11"});
    tool(root, {"predict", "--method", method, "--split", "test"});
    tool(root, {"evaluate", "--scores", (root / "scores" / (method + "_test.csv")).string(), "--method", method});
  }
  tool(root, {"report", "--split", "test"});
}

Verdict end_to_end() {
  testing::TempDir root("vrd-accept");
  const auto start = std::chrono::steady_clock::now();
  try {
    pipeline(root.path(), 2000, 500);
  } catch (const std::exception& e) {
    return {false, fmt::format("pipeline failed: {}", e.what())};
  }
  const double t = seconds_since(start);
  const double wbb = recall_at_1(root.path(), "UnionWBB");
  const double plain = recall_at_1(root.path(), "Union");
  return {wbb >= kEndToEndRecall && wbb > plain && t < kEndToEndSeconds,
          fmt::format("UnionWBB R@1 {:.2f}% (need >= {}), Union R@1 {:.2f}%, 2000 train / 500 test in {:.1f} s "
                      "(limit {} s)",
                      wbb, kEndToEndRecall, plain, t, kEndToEndSeconds)};
}

vrd::DatasetSplit random_split(std::mt19937_64& rng, std::size_t n, int objects, int predicates) {
  vrd::DatasetSplit s;
  for (int i = 0; i < objects; ++i) s.object_vocab.push_back(fmt::format("o{}", i));
  for (int i = 0; i < predicates; ++i) s.predicate_vocab.push_back(fmt::format("p{}", i));
  for (std::size_t i = 0; i < n; ++i) {
    vrd::RelInstance r;
    r.instance_id = fmt::format("r{}", i);
    r.subject.category_id = static_cast<int>(rng() % objects);
    r.object.category_id = static_cast<int>(rng() % objects);
    r.predicate_id = static_cast<int>(rng() % predicates);
    s.instances.push_back(r);
  }
  return s;
}

Verdict zero_shot() {
  std::mt19937_64 rng(70);
  int clean = 0, complete = 0;
  const int pairs = 300;
  for (int trial = 0; trial < pairs; ++trial) {
    const int objects = 2 + static_cast<int>(rng() % 10);
    const int predicates = 1 + static_cast<int>(rng() % 8);
    const auto train = random_split(rng, rng() % 400, objects, predicates);
    const auto test = random_split(rng, 1 + rng() % 400, objects, predicates);
    const auto zs = vrd::derive_zero_shot(train, test);
    bool disjoint = true;
    for (const auto& z : zs.instances) {
      for (const auto& t : train.instances) {
        disjoint = disjoint && !(z.subject.category_id == t.subject.category_id &&
                                 z.predicate_id == t.predicate_id && z.object.category_id == t.object.category_id);
      }
    }
    clean += disjoint;
    complete += zs.instances.size() == oracle::brute_zero_shot(train, test).size();
  }
  return {clean == pairs && complete == pairs,
          fmt::format("{}/{} random pairs share no triple with train; {}/{} keep every unseen instance", clean,
                      pairs, complete, pairs)};
}

std::string mask_duration(const std::string& text) {
  static const std::regex duration("\"duration_seconds\": [^\\n]*");
  return std::regex_replace(text, duration, "\"duration_seconds\": -");
}

Verdict determinism() {
  testing::TempDir a("vrd-det"), b("vrd-det");
  try {
    pipeline(a.path(), 300, 100);
    pipeline(b.path(), 300, 100);
  } catch (const std::exception& e) {
    return {false, fmt::format("pipeline failed: {}", e.what())};
  }
  std::size_t files = 0, manifests = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path());
    const auto other = b.path() / rel;
    std::string x = testing::slurp(entry.path()), y = fs::exists(other) ? testing::slurp(other) : std::string("\x01");
    if (*rel.begin() == "runs") {
      ++manifests;
      x = mask_duration(x);
      y = mask_duration(y);
    } else {
      ++files;
    }
    if (x != y) differing.push_back(rel.generic_string());
  }
  std::size_t count_b = 0;
  for (const auto& entry : fs::recursive_directory_iterator(b.path())) count_b += entry.is_regular_file();
  const bool same_set = count_b == files + manifests;
  return {differing.empty() && same_set,
          differing.empty()
              ? fmt::format("{} artifacts byte-identical across two runs; {} run manifests identical apart "
                            "from wall-clock duration",
                            files, manifests)
              : fmt::format("{} files differ, first: {}", differing.size(), differing.front())};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"transform oracle", transform_oracle},
      {"gaussian suite", gaussian_suite},
      {"metric oracle", metric_oracle},
      {"tukey suite", tukey_suite},
      {"gradient check", gradient_check},
      {"end-to-end ordering", end_to_end},
      {"zero-shot invariant", zero_shot},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, fmt::format("threw: {}", e.what())};
    }
    failed += !v.pass;
    fmt::print("criterion {} {} {}: {}\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first, v.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
