#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace vrd::stats {

/// P(Q <= q) for the studentized range of k means with df error degrees of
/// freedom. df may be +infinity.
double studentized_range_cdf(double q, int k, double df);

/// q with P(Q <= q) = 1 - alpha, bracketed on the CDF to within 1e-7. Results are memoised per (alpha, k, df); the memo is thread-safe.
double studentized_range_quantile(double alpha, int k, double df);

struct RunGroup {
  std::string architecture;
  std::string method;
  std::vector<double> values;

  std::string label() const { return architecture + " " + method; }
};

struct TukeyResult {
  double alpha = 0.05;
  double q_critical = 0.0;
  double ms_within = 0.0;
  double df_within = 0.0;
  std::vector<RunGroup> groups;  // input order
  std::vector<double> means;
  /// significant[i][j] for i != j
  std::vector<std::vector<bool>> significant;
  /// Letters per group in alphabet order, e.g. {"B", "C"}.
  std::vector<std::vector<std::string>> letters;
  /// Group indices by descending mean; ties keep input order.
  std::vector<std::size_t> order;
};

/// Tukey-Kramer HSD over one-way ANOVA groups with a compact letter display.
/// Throws UsageError for fewer than two groups or a group with fewer than two
/// runs.
TukeyResult tukey_hsd(const std::vector<RunGroup>& groups, double alpha = 0.05);

/// Tukey-Kramer threshold for groups i and j.
double hsd_threshold(const TukeyResult& result, std::size_t i, std::size_t j);

/// Insert-and-absorb compact letter display. `significant` is symmetric;
/// `order` lists the groups by descending mean and decides letter order.
std::vector<std::vector<std::string>> compact_letter_display(
    const std::vector<std::vector<bool>>& significant, const std::vector<std::size_t>& order);

/// Column letters A..Z, AA, AB, ...
std::string letter_name(std::size_t index);

/// Table with columns Architecture, Method, Mean R@1, Group; rows by
/// descending mean, multiple letters joined with commas.
std::string render_grouping_table(const TukeyResult& result);
/// The same rows as CSV.
std::string render_grouping_csv(const TukeyResult& result);

/// CSV `architecture,method,run_index,recall` grouped by (architecture,
/// method) in first-appearance order.
std::vector<RunGroup> read_runs(const std::filesystem::path& path);

}  // namespace vrd::stats
