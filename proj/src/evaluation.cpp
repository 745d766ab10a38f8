#include "vrd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "vrd/csv.hpp"
#include "vrd/error.hpp"

namespace vrd {

namespace fs = std::filesystem;

void write_scores(const fs::path& path, const ScoreMatrix& scores) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << "instance_id";
  for (std::size_t c = 0; c < scores.num_predicates(); ++c) out << ",s" << c;
  out << '\n';
  for (std::size_t r = 0; r < scores.instance_ids.size(); ++r) {
    out << csv::escape(scores.instance_ids[r]);
    for (const double v : scores.scores.row(r)) out << ',' << fmt::format("{:.17g}", v);
    out << '\n';
  }
  if (!out) throw Error(fmt::format("failed writing {}", path.string()));
}

ScoreMatrix read_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("scores file not found: {}", path.string()));
  const auto records = csv::read_all(in);
  if (records.empty() || records[0].size() < 2 || records[0][0] != "instance_id") {
    throw DataError(fmt::format("{}: header must be instance_id,s0,...", path.string()));
  }
  const std::size_t classes = records[0].size() - 1;
  for (std::size_t c = 0; c < classes; ++c) {
    if (records[0][c + 1] != fmt::format("s{}", c)) {
      throw DataError(fmt::format("{}: header column {} should be s{}", path.string(), c + 1, c));
    }
  }
  ScoreMatrix out;
  out.scores = Matrix(records.size() - 1, classes);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& f = records[r];
    if (f.size() != classes + 1) {
      throw DataError(fmt::format("{}: line {} has {} fields, expected {}", path.string(), r + 1,
                                  f.size(), classes + 1));
    }
    out.instance_ids.push_back(f[0]);
    for (std::size_t c = 0; c < classes; ++c) {
      const double v = csv::to_double(f[c + 1], fmt::format("{} line {}", path.string(), r + 1));
      if (!std::isfinite(v)) {
        throw DataError(fmt::format("{}: line {} has a non-finite score", path.string(), r + 1));
      }
      out.scores(r - 1, c) = v;
    }
  }
  return out;
}

std::vector<int> align_labels(const ScoreMatrix& scores, const DatasetSplit& split) {
  if (scores.num_predicates() != split.predicate_vocab.size()) {
    throw DataError(fmt::format("scores have {} predicate columns, vocabulary has {}",
                                scores.num_predicates(), split.predicate_vocab.size()));
  }
  std::unordered_map<std::string_view, int> label_of;
  for (const auto& inst : split.instances) label_of.emplace(inst.instance_id, inst.predicate_id);

  std::vector<int> labels;
  labels.reserve(scores.instance_ids.size());
  std::set<std::string_view> seen;
  for (const auto& id : scores.instance_ids) {
    const auto it = label_of.find(id);
    if (it == label_of.end()) throw DataError(fmt::format("unexpected instance in scores: {}", id));
    if (!seen.insert(id).second) throw DataError(fmt::format("duplicate instance in scores: {}", id));
    labels.push_back(it->second);
  }
  for (const auto& inst : split.instances) {
    if (!seen.contains(inst.instance_id)) {
      throw DataError(fmt::format("missing instance in scores: {}", inst.instance_id));
    }
  }
  return labels;
}

std::size_t rank_of(std::span<const double> row, int label) {
  const double target = row[label];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] > target || (row[j] == target && j < static_cast<std::size_t>(label))) ++rank;
  }
  return rank;
}

namespace {

void check_k(int k, std::size_t classes) {
  if (k < 1 || static_cast<std::size_t>(k) > classes) {
    throw UsageError(fmt::format("k must be in [1, {}], got {}", classes, k));
  }
}

}  // namespace

double recall_at_k(const ScoreMatrix& scores, const DatasetSplit& split, int k) {
  check_k(k, scores.num_predicates());
  const auto labels = align_labels(scores, split);
  if (labels.empty()) throw DataError("cannot compute recall over an empty split");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (rank_of(scores.scores.row(r), labels[r]) < static_cast<std::size_t>(k)) ++hits;
  }
  return static_cast<double>(hits) / labels.size();
}

std::map<int, ClassRecall> per_predicate_recall(const ScoreMatrix& scores,
                                                const DatasetSplit& split, int k) {
  check_k(k, scores.num_predicates());
  const auto labels = align_labels(scores, split);
  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // hits, support
  for (std::size_t r = 0; r < labels.size(); ++r) {
    auto& [hits, support] = counts[labels[r]];
    ++support;
    if (rank_of(scores.scores.row(r), labels[r]) < static_cast<std::size_t>(k)) ++hits;
  }
  std::map<int, ClassRecall> out;
  for (const auto& [label, hs] : counts) {
    out[label] = {static_cast<double>(hs.first) / hs.second, hs.second};
  }
  return out;
}

std::vector<std::vector<std::size_t>> confusion_top1(const ScoreMatrix& scores,
                                                     const DatasetSplit& split) {
  const auto labels = align_labels(scores, split);
  const std::size_t classes = scores.num_predicates();
  std::vector<std::vector<std::size_t>> counts(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto row = scores.scores.row(r);
    // First maximum, matching the lower-index tie-break of rank_of.
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    ++counts[labels[r]][best];
  }
  return counts;
}

// Error taxonomy --------------------------------------------------------------

namespace {

constexpr std::string_view kCategoryNames[] = {
    "AlternativePredicates", "DifferentPOV", "IncorrectPrediction", "LinguisticError",
    "Phrases",               "Synonyms",     "IncorrectAnnotation", "BackgroundObjects",
};

}  // namespace

std::string_view error_category_name(ErrorCategory c) { return kCategoryNames[static_cast<int>(c)]; }

ErrorCategory parse_error_category(std::string_view text) {
  for (const auto c : kAllErrorCategories) {
    if (error_category_name(c) == text) return c;
  }
  throw DataError(fmt::format("unknown error category '{}'", text));
}

std::vector<ErrorTag> read_error_tags(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("error tag file not found: {}", path.string()));
  auto records = csv::read_all(in);
  std::vector<ErrorTag> tags;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& f = records[i];
    if (i == 0 && !f.empty() && f[0] == "instance_id") continue;
    if (f.size() != 2) throw DataError(fmt::format("{}: line {} needs 2 fields", path.string(), i + 1));
    tags.push_back({f[0], parse_error_category(f[1])});
  }
  return tags;
}

std::map<ErrorCategory, double> aggregate_error_tags(const std::vector<ErrorTag>& tags) {
  if (tags.empty()) throw UsageError("no error tags to aggregate");
  std::set<std::string_view> instances;
  std::set<std::pair<std::string_view, ErrorCategory>> pairs;
  std::map<ErrorCategory, std::size_t> counts;
  for (const auto& t : tags) {
    if (!pairs.emplace(t.instance_id, t.category).second) {
      throw DataError(fmt::format("instance {} tagged {} twice", t.instance_id,
                                  error_category_name(t.category)));
    }
    instances.insert(t.instance_id);
    ++counts[t.category];
  }
  std::map<ErrorCategory, double> out;
  for (const auto c : kAllErrorCategories) {
    out[c] = 100.0 * static_cast<double>(counts[c]) / static_cast<double>(instances.size());
  }
  return out;
}

// Rendering -------------------------------------------------------------------

namespace {

std::string render_grid(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c) out += " | ";
      out += fmt::format("{:<{}}", cells[r][c], width[c]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
    if (r == 0) {
      for (std::size_t c = 0; c < width.size(); ++c) {
        if (c) out += "-+-";
        out += std::string(width[c], '-');
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace

std::string render_recall_table(std::vector<RecallRow> rows) {
  std::set<int> ks;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.recall) ks.insert(k);
  }
  const auto r1 = [](const RecallRow& r) {
    const auto it = r.recall.find(1);
    return it == r.recall.end() ? -1.0 : it->second;
  };
  std::stable_sort(rows.begin(), rows.end(),
                   [&](const RecallRow& a, const RecallRow& b) { return r1(a) > r1(b); });
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Method"};
  for (const int k : ks) header.push_back(fmt::format("R@{}", k));
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.method};
    for (const int k : ks) {
      const auto it = r.recall.find(k);
      line.push_back(it == r.recall.end() ? "-" : fmt::format("{:.2f}", it->second));
    }
    cells.push_back(line);
  }
  return render_grid(cells);
}

std::string render_per_predicate_table(const std::vector<PredicateColumn>& columns,
                                       const std::vector<std::string>& predicate_order) {
  std::vector<double> col_best(columns.size(), -1.0);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (const auto& [p, v] : columns[c].recall) col_best[c] = std::max(col_best[c], v);
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Predicate"};
  for (const auto& col : columns) header.push_back(col.method);
  cells.push_back(header);
  for (const auto& pred : predicate_order) {
    double row_best = -1.0;
    bool any = false;
    for (const auto& col : columns) {
      if (const auto it = col.recall.find(pred); it != col.recall.end()) {
        row_best = std::max(row_best, it->second);
        any = true;
      }
    }
    if (!any) continue;
    std::vector<std::string> line{pred};
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto it = columns[c].recall.find(pred);
      if (it == columns[c].recall.end()) {
        line.push_back("-");
        continue;
      }
      std::string text = fmt::format("{:.2f}", it->second);
      if (it->second == col_best[c]) text = "_" + text + "_";
      if (it->second == row_best) text = "**" + text + "**";
      line.push_back(text);
    }
    cells.push_back(line);
  }
  return render_grid(cells);
}

}  // namespace vrd
