#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrd/dataset.hpp"
#include "vrd/matrix.hpp"

namespace vrd {

/// Per-instance predicate scores, one row per instance id.
struct ScoreMatrix {
  std::vector<std::string> instance_ids;
  Matrix scores;  // instance x predicate

  std::size_t num_predicates() const { return scores.cols; }
};

/// CSV with header `instance_id,s0,...,s{C-1}`. Values are written with 17
/// significant digits so that a read-back is exact.
void write_scores(const std::filesystem::path& path, const ScoreMatrix& scores);
ScoreMatrix read_scores(const std::filesystem::path& path);

/// Ground-truth predicate ids in score-row order. Throws DataError naming the
/// first instance that is missing, unexpected, or duplicated.
std::vector<int> align_labels(const ScoreMatrix& scores, const DatasetSplit& split);

/// 0-based rank of `label` in `row`: number of predicates scoring strictly
/// higher, plus those tying with a lower index.
std::size_t rank_of(std::span<const double> row, int label);

/// Fraction of instances whose ground truth is among the k best scores.
double recall_at_k(const ScoreMatrix& scores, const DatasetSplit& split, int k);

struct ClassRecall {
  double recall = 0.0;
  std::size_t support = 0;
};

/// Recall@k per ground-truth predicate; predicates without support omitted.
std::map<int, ClassRecall> per_predicate_recall(const ScoreMatrix& scores,
                                                const DatasetSplit& split, int k);

/// counts[gt][top1]
std::vector<std::vector<std::size_t>> confusion_top1(const ScoreMatrix& scores,
                                                     const DatasetSplit& split);

enum class ErrorCategory {
  AlternativePredicates,
  DifferentPOV,
  IncorrectPrediction,
  LinguisticError,
  Phrases,
  Synonyms,
  IncorrectAnnotation,
  BackgroundObjects,
};

inline constexpr std::array<ErrorCategory, 8> kAllErrorCategories = {
    ErrorCategory::AlternativePredicates, ErrorCategory::DifferentPOV,
    ErrorCategory::IncorrectPrediction,   ErrorCategory::LinguisticError,
    ErrorCategory::Phrases,               ErrorCategory::Synonyms,
    ErrorCategory::IncorrectAnnotation,   ErrorCategory::BackgroundObjects,
};

std::string_view error_category_name(ErrorCategory c);
ErrorCategory parse_error_category(std::string_view text);

struct ErrorTag {
  std::string instance_id;
  ErrorCategory category;
};

/// CSV `instance_id,category`.
std::vector<ErrorTag> read_error_tags(const std::filesystem::path& path);

/// Percentage of tagged instances carrying each category. An instance may
/// carry several categories, so the values can sum past 100. Throws
/// UsageError for an empty list and DataError for a repeated
/// (instance, category) pair.
std::map<ErrorCategory, double> aggregate_error_tags(const std::vector<ErrorTag>& tags);

// Report rendering ---------------------------------------------------------

/// Recall@k for one method, keyed by k, as percentages.
struct RecallRow {
  std::string method;
  std::map<int, double> recall;
};

/// Rows sorted by descending R@1 with one column per k.
std::string render_recall_table(std::vector<RecallRow> rows);

/// One column of a per-predicate table.
struct PredicateColumn {
  std::string method;
  std::map<std::string, double> recall;  // predicate name -> percent
};

/// Predicates as rows, methods as columns. The best value in each method
/// column is wrapped in `_..._`, the best value in each predicate row in
/// `**...**`.
std::string render_per_predicate_table(const std::vector<PredicateColumn>& columns,
                                       const std::vector<std::string>& predicate_order);

}  // namespace vrd
