#include "vrd/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include <fmt/format.h>

#include "vrd/csv.hpp"
#include "vrd/error.hpp"

namespace vrd::stats {

namespace {

// 16-point Gauss-Legendre nodes and weights on [-1, 1] (positive half).
constexpr std::array<double, 8> kGlNodes = {
    0.0950125098376374401853, 0.2816035507792589132305, 0.4580167776572273863424,
    0.6178762444026437484467, 0.7554044083550030338951, 0.8656312023878317438805,
    0.9445750230732325760779, 0.9894009349916499325962};
constexpr std::array<double, 8> kGlWeights = {
    0.1894506104550684962854, 0.1826034150449235888668, 0.1691565193950025381893,
    0.1495959888165767320815, 0.1246289712555338720525, 0.0951585116824927848099,
    0.0622535239386478928628, 0.0271524594117540948518};

// Composite Gauss-Legendre rule as (abscissa, weight) pairs.
std::vector<std::pair<double, double>> composite_rule(double lo, double hi, int panels) {
  std::vector<std::pair<double, double>> rule;
  rule.reserve(static_cast<std::size_t>(panels) * 16);
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = lo + (p + 0.5) * h;
    const double half = 0.5 * h;
    for (std::size_t i = 0; i < kGlNodes.size(); ++i) {
      rule.emplace_back(mid - half * kGlNodes[i], half * kGlWeights[i]);
      rule.emplace_back(mid + half * kGlNodes[i], half * kGlWeights[i]);
    }
  }
  return rule;
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

// CDF of the range of k iid standard normals:
//   P(R <= w) = k * int phi(z) [Phi(z) - Phi(z - w)]^(k-1) dz
class RangeCdf {
 public:
  explicit RangeCdf(int k) : k_(k), rule_(composite_rule(-8.5, 8.5, 24)) {
    pdf_.reserve(rule_.size());
    cdf_.reserve(rule_.size());
    for (const auto& [z, w] : rule_) {
      pdf_.push_back(norm_pdf(z));
      cdf_.push_back(norm_cdf(z));
    }
  }

  double operator()(double w) const {
    if (w <= 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < rule_.size(); ++i) {
      const double inner = cdf_[i] - norm_cdf(rule_[i].first - w);
      if (inner > 0) acc += rule_[i].second * pdf_[i] * std::pow(inner, k_ - 1);
    }
    return std::min(1.0, k_ * acc);
  }

 private:
  int k_;
  std::vector<std::pair<double, double>> rule_;
  std::vector<double> pdf_;
  std::vector<double> cdf_;
};

}  // namespace

double studentized_range_cdf(double q, int k, double df) {
  if (k < 2) throw UsageError(fmt::format("studentized range needs k >= 2, got {}", k));
  if (!(df >= 1.0)) throw UsageError(fmt::format("degrees of freedom must be >= 1, got {}", df));
  if (q <= 0) return 0.0;
  const RangeCdf range(k);
  if (std::isinf(df)) return range(q);

  // s = sqrt(chi2_df / df) has density
  //   df^(df/2) / (Gamma(df/2) 2^(df/2 - 1)) s^(df - 1) exp(-df s^2 / 2).
  const double log_norm = 0.5 * df * std::log(df) - std::lgamma(0.5 * df) - (0.5 * df - 1.0) * std::log(2.0);
  const double spread = 1.0 / std::sqrt(2.0 * df);
  const double lo = std::max(0.0, 1.0 - 14.0 * spread);
  const double hi = 1.0 + 14.0 * spread + (df < 4 ? 4.0 : 0.0);
  double acc = 0.0;
  for (const auto& [s, w] : composite_rule(lo, hi, 32)) {
    if (s <= 0) continue;
    const double weight = w * std::exp(log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s);
    if (weight < 1e-17) continue;
    acc += weight * range(q * s);
  }
  return std::clamp(acc, 0.0, 1.0);
}

double studentized_range_quantile(double alpha, int k, double df) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw UsageError(fmt::format("alpha must be in (0, 1), got {}", alpha));
  }
  if (k < 2) throw UsageError(fmt::format("studentized range needs k >= 2, got {}", k));
  if (!(df >= 1.0)) throw UsageError(fmt::format("degrees of freedom must be >= 1, got {}", df));

  static std::mutex memo_mutex;
  static std::map<std::tuple<double, int, double>, double> memo;
  const auto key = std::make_tuple(alpha, k, df);
  {
    std::lock_guard lock(memo_mutex);
    if (const auto it = memo.find(key); it != memo.end()) return it->second;
  }

  const double target = 1.0 - alpha;
  double lo = 0.0;
  double hi = 8.0;
  double f_lo = -target;
  double f_hi = studentized_range_cdf(hi, k, df) - target;
  for (int grow = 0; f_hi < 0.0; ++grow) {
    if (grow == 20) {
      throw Error(fmt::format("studentized range quantile did not bracket: alpha={} k={} df={} "
                              "cdf({})={}",
                              alpha, k, df, hi, f_hi + target));
    }
    lo = hi;
    f_lo = f_hi;
    hi *= 2.0;
    f_hi = studentized_range_cdf(hi, k, df) - target;
  }
  while (hi - lo > 0.5) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = studentized_range_cdf(mid, k, df) - target;
    if (f_mid < 0.0) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
    }
  }
  // Illinois false position. Once successive estimates agree, the root is
  // confirmed by bracketing it within the tolerance.
  int side = 0;
  double previous = lo;
  for (int iterations = 0; hi - lo > 1e-7; ++iterations) {
    if (iterations > 200) {
      throw Error(fmt::format("studentized range quantile did not converge: alpha={} k={} df={} "
                              "bracket=[{}, {}]",
                              alpha, k, df, lo, hi));
    }
    double mid = hi - f_hi * (hi - lo) / (f_hi - f_lo);
    if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
    if (std::abs(mid - previous) < 1e-8) {
      const double a = std::max(lo, mid - 4e-8);
      const double b = std::min(hi, mid + 4e-8);
      const double f_a = studentized_range_cdf(a, k, df) - target;
      const double f_b = studentized_range_cdf(b, k, df) - target;
      if (f_a <= 0.0 && f_b >= 0.0) {
        lo = a;
        hi = b;
        break;
      }
    }
    previous = mid;
    const double f_mid = studentized_range_cdf(mid, k, df) - target;
    if (f_mid < 0.0) {
      lo = mid;
      f_lo = f_mid;
      if (side == -1) f_hi *= 0.5;
      side = -1;
    } else {
      hi = mid;
      f_hi = f_mid;
      if (side == 1) f_lo *= 0.5;
      side = 1;
    }
  }
  const double q = 0.5 * (lo + hi);
  std::lock_guard lock(memo_mutex);
  memo.emplace(key, q);
  return q;
}

// Tukey HSD -------------------------------------------------------------------

std::string letter_name(std::size_t index) {
  std::string out;
  ++index;
  while (index > 0) {
    --index;
    out.insert(out.begin(), static_cast<char>('A' + index % 26));
    index /= 26;
  }
  return out;
}

std::vector<std::vector<std::string>> compact_letter_display(
    const std::vector<std::vector<bool>>& significant, const std::vector<std::size_t>& order) {
  const std::size_t n = order.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

  using Column = std::vector<bool>;
  std::vector<Column> columns{Column(n, true)};

  const auto subset_of = [](const Column& a, const Column& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] && !b[i]) return false;
    }
    return true;
  };

  for (std::size_t ri = 0; ri < n; ++ri) {
    for (std::size_t rj = ri + 1; rj < n; ++rj) {
      const std::size_t i = order[ri];
      const std::size_t j = order[rj];
      if (!significant[i][j]) continue;
      // Insert: split every column that still joins i and j.
      std::vector<Column> next;
      for (const auto& col : columns) {
        if (col[i] && col[j]) {
          Column without_j = col;
          without_j[j] = false;
          Column without_i = col;
          without_i[i] = false;
          next.push_back(std::move(without_j));
          next.push_back(std::move(without_i));
        } else {
          next.push_back(col);
        }
      }
      // Absorb: drop columns contained in another (keep the first of equals).
      std::vector<Column> kept;
      for (std::size_t a = 0; a < next.size(); ++a) {
        bool absorbed = false;
        for (std::size_t b = 0; b < next.size() && !absorbed; ++b) {
          if (a == b || !subset_of(next[a], next[b])) continue;
          absorbed = next[a] != next[b] || b < a;
        }
        if (!absorbed) kept.push_back(next[a]);
      }
      columns = std::move(kept);
    }
  }

  // Letter order follows the members' mean ranks, so the best group gets A.
  const auto members = [&](const Column& col) {
    std::vector<std::size_t> ranks;
    for (std::size_t g = 0; g < n; ++g) {
      if (col[g]) ranks.push_back(rank[g]);
    }
    std::sort(ranks.begin(), ranks.end());
    return ranks;
  };
  std::sort(columns.begin(), columns.end(),
            [&](const Column& a, const Column& b) { return members(a) < members(b); });

  std::vector<std::vector<std::string>> letters(n);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t g = 0; g < n; ++g) {
      if (columns[c][g]) letters[g].push_back(letter_name(c));
    }
  }
  return letters;
}

TukeyResult tukey_hsd(const std::vector<RunGroup>& groups, double alpha) {
  if (groups.size() < 2) {
    throw UsageError(fmt::format("Tukey HSD needs at least 2 groups, got {}", groups.size()));
  }
  TukeyResult res;
  res.alpha = alpha;
  res.groups = groups;

  double ss_within = 0.0;
  std::size_t total = 0;
  for (const auto& g : groups) {
    if (g.values.size() < 2) {
      throw UsageError(fmt::format("group '{}' has {} runs; at least 2 are required", g.label(),
                                   g.values.size()));
    }
    for (const double v : g.values) {
      if (!(v >= 0.0 && v <= 100.0)) {
        throw DataError(fmt::format("group '{}': recall {} outside [0, 100]", g.label(), v));
      }
    }
    const double mean = std::accumulate(g.values.begin(), g.values.end(), 0.0) / g.values.size();
    res.means.push_back(mean);
    for (const double v : g.values) ss_within += (v - mean) * (v - mean);
    total += g.values.size();
  }
  const std::size_t k = groups.size();
  res.df_within = static_cast<double>(total - k);
  res.ms_within = ss_within / res.df_within;
  res.q_critical = studentized_range_quantile(alpha, static_cast<int>(k), res.df_within);

  res.significant.assign(k, std::vector<bool>(k, false));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const bool sig = std::abs(res.means[i] - res.means[j]) > hsd_threshold(res, i, j);
      res.significant[i][j] = res.significant[j][i] = sig;
    }
  }

  res.order.resize(k);
  std::iota(res.order.begin(), res.order.end(), 0);
  std::stable_sort(res.order.begin(), res.order.end(),
                   [&](std::size_t a, std::size_t b) { return res.means[a] > res.means[b]; });
  res.letters = compact_letter_display(res.significant, res.order);
  return res;
}

double hsd_threshold(const TukeyResult& r, std::size_t i, std::size_t j) {
  const double ni = static_cast<double>(r.groups[i].values.size());
  const double nj = static_cast<double>(r.groups[j].values.size());
  return r.q_critical * std::sqrt(r.ms_within / 2.0 * (1.0 / ni + 1.0 / nj));
}

namespace {

std::string joined(const std::vector<std::string>& letters) {
  std::string out;
  for (std::size_t i = 0; i < letters.size(); ++i) {
    if (i) out += ',';
    out += letters[i];
  }
  return out;
}

}  // namespace

std::string render_grouping_table(const TukeyResult& result) {
  std::vector<std::array<std::string, 4>> rows{{"Architecture", "Method", "Mean R@1", "Group"}};
  for (const std::size_t g : result.order) {
    rows.push_back({result.groups[g].architecture, result.groups[g].method,
                    fmt::format("{:.2f}", result.means[g]), joined(result.letters[g])});
  }
  std::array<std::size_t, 4> width{};
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += fmt::format("{:<{}} | {:<{}} | {:>{}} | {}\n", rows[r][0], width[0], rows[r][1],
                       width[1], rows[r][2], width[2], rows[r][3]);
    if (r == 0) {
      out += fmt::format("{}-+-{}-+-{}-+-{}\n", std::string(width[0], '-'),
                         std::string(width[1], '-'), std::string(width[2], '-'),
                         std::string(width[3], '-'));
    }
  }
  return out;
}

std::string render_grouping_csv(const TukeyResult& result) {
  std::string out = "architecture,method,runs,mean_recall,group\n";
  for (const std::size_t g : result.order) {
    out += csv::join({result.groups[g].architecture, result.groups[g].method,
                      std::to_string(result.groups[g].values.size()),
                      fmt::format("{:.4f}", result.means[g]), joined(result.letters[g])});
    out += '\n';
  }
  return out;
}

std::vector<RunGroup> read_runs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("runs file not found: {}", path.string()));
  const auto records = csv::read_all(in);
  std::vector<RunGroup> groups;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& f = records[i];
    if (i == 0 && !f.empty() && f[0] == "architecture") continue;
    if (f.size() != 4) throw DataError(fmt::format("{}: line {} needs 4 fields", path.string(), i + 1));
    csv::to_int(f[2], fmt::format("{} line {} run_index", path.string(), i + 1));
    const double recall = csv::to_double(f[3], fmt::format("{} line {} recall", path.string(), i + 1));
    const auto key = std::make_pair(f[0], f[1]);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      groups.push_back({f[0], f[1], {}});
    }
    groups[it->second].values.push_back(recall);
  }
  return groups;
}

}  // namespace vrd::stats
