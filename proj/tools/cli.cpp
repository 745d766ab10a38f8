#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "vrd/csv.hpp"
#include "vrd/dataset.hpp"
#include "vrd/error.hpp"
#include "vrd/evaluation.hpp"
#include "vrd/image_io.hpp"
#include "vrd/log.hpp"
#include "vrd/manifest.hpp"
#include "vrd/predictor.hpp"
#include "vrd/simd.hpp"
#include "vrd/stats.hpp"
#include "vrd/transforms.hpp"

namespace fs = std::filesystem;

namespace vrd::cli {
namespace {

constexpr std::string_view kDefaultOutRoot = "vrd_out";
constexpr std::string_view kOutRootEnv = "VRD_OUT_ROOT";

// Fixed layout under the output root.
struct Layout {
  fs::path root;

  fs::path data() const { return root / "data"; }
  fs::path images() const { return data() / "images"; }
  fs::path annotations(SplitName split) const {
    return data() / fmt::format("annotations_{}.json", split_name(split));
  }
  fs::path dataset(std::string_view method, SplitName split) const {
    return root / "datasets" / std::string(method) / std::string(split_name(split));
  }
  fs::path models() const { return root / "models"; }
  fs::path scores() const { return root / "scores"; }
  fs::path reports() const { return root / "reports"; }
  fs::path runs() const { return root / "runs"; }

  // Path relative to the root when it lies inside it, so manifests do not
  // depend on where the root is.
  std::string show(const fs::path& p) const {
    const auto abs_root = fs::weakly_canonical(root);
    const auto abs = fs::weakly_canonical(p);
    const auto rel = abs.lexically_relative(abs_root);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.generic_string();
  }
};

struct Common {
  std::string out_root;
  bool verbose = false;
  std::string simd;
};

void require_file(const fs::path& p, std::string_view what) {
  if (!fs::is_regular_file(p)) throw UsageError(fmt::format("{} not found: {}", what, p.string()));
}

void require_dir(const fs::path& p, std::string_view what) {
  if (!fs::is_directory(p)) throw UsageError(fmt::format("{} not found: {}", what, p.string()));
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw Error(fmt::format("failed writing {}", path.string()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(fmt::format("file not found: {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

// Collects a RunManifest while a subcommand runs and writes it at the end.
class Recorder {
 public:
  Recorder(const Layout& layout, std::string subcommand, std::string tag)
      : layout_(layout), start_(std::chrono::steady_clock::now()) {
    manifest_.subcommand = std::move(subcommand);
    manifest_.tool_version = std::string(tool_version());
    tag_ = std::move(tag);
  }

  void config(const std::string& key, const std::string& value) { manifest_.config[key] = value; }
  void input(const fs::path& p) { manifest_.inputs.push_back(layout_.show(p)); }
  void output(const fs::path& p) { manifest_.outputs.push_back(layout_.show(p)); }
  void seed(std::uint64_t s) { manifest_.seed = s; }

  fs::path finish() {
    manifest_.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const std::string name =
        tag_.empty() ? manifest_.subcommand : fmt::format("{}_{}", manifest_.subcommand, tag_);
    const fs::path path = layout_.runs() / (name + ".json");
    write_run_manifest(path, manifest_);
    return path;
  }

 private:
  const Layout& layout_;
  std::chrono::steady_clock::time_point start_;
  RunManifest manifest_;
  std::string tag_;
};

// Dataset selection shared by preprocess and evaluate.
struct SplitSource {
  std::string split = "test";
  std::string annotations;
  std::string train_annotations;
  std::string images;
  std::string objects;
  std::string predicates;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--split", split, "train, test or zero_shot")->capture_default_str();
    cmd->add_option("--annotations", annotations, "annotation JSON of the split");
    cmd->add_option("--train-annotations", train_annotations,
                    "training annotations used to derive the zero_shot split");
    cmd->add_option("--images", images, "image directory");
    cmd->add_option("--objects", objects, "object vocabulary (default: next to annotations)");
    cmd->add_option("--predicates", predicates, "predicate vocabulary (default: next to annotations)");
  }

  SplitName name() const { return parse_split_name(split); }

  fs::path image_root(const Layout& layout) const {
    return images.empty() ? layout.images() : fs::path(images);
  }

  DatasetSplit load(const Layout& layout, Recorder& rec) const {
    const SplitName which = name();
    const auto annotation_path = [&](SplitName s, const std::string& given) {
      return given.empty() ? layout.annotations(s) : fs::path(given);
    };
    const fs::path primary =
        annotation_path(which == SplitName::ZeroShot ? SplitName::Test : which, annotations);
    const fs::path root = image_root(layout);
    require_file(primary, "annotations");
    require_dir(root, "image directory");
    VocabPaths vocab = VocabPaths::beside(primary);
    if (!objects.empty()) vocab.objects = objects;
    if (!predicates.empty()) vocab.predicates = predicates;
    require_file(vocab.objects, "object vocabulary");
    require_file(vocab.predicates, "predicate vocabulary");
    rec.input(primary);
    rec.input(vocab.objects);
    rec.input(vocab.predicates);
    rec.config("split", std::string(split_name(which)));
    rec.config("annotations", layout.show(primary));
    rec.config("images", layout.show(root));

    ParseReport report;
    DatasetSplit split_data = parse_annotations(primary, root, vocab, which, &report);
    if (report.clamped_boxes || report.clipped_masks) {
      log_warn("{}: clamped {} boxes and clipped {} masks", primary.string(), report.clamped_boxes,
               report.clipped_masks);
    }
    if (which != SplitName::ZeroShot) return split_data;

    const fs::path train_path = annotation_path(SplitName::Train, train_annotations);
    require_file(train_path, "training annotations");
    rec.input(train_path);
    rec.config("train_annotations", layout.show(train_path));
    const DatasetSplit train = parse_annotations(train_path, root, vocab, SplitName::Train);
    return derive_zero_shot(train, split_data);
  }
};

// synth ----------------------------------------------------------------------

struct SynthArgs {
  int n = 2000;
  int n_test = 500;
  std::uint64_t seed = 7;
  int image_size = 96;
};

void run_synth(const Layout& layout, const SynthArgs& a, std::ostream& out) {
  if (a.n < 1 || a.n_test < 1) throw UsageError("--n and --n-test must be >= 1");
  Recorder rec(layout, "synth", "");
  rec.seed(a.seed);
  rec.config("n", std::to_string(a.n));
  rec.config("n_test", std::to_string(a.n_test));
  rec.config("seed", std::to_string(a.seed));
  rec.config("image_size", std::to_string(a.image_size));

  fs::create_directories(layout.images());
  const auto sink = [&](const std::string& id, const Raster& image) {
    write_png(layout.images() / id, image);
  };
  // Train and test draw from disjoint seed streams and image namespaces.
  const SyntheticData train = generate_synthetic(a.n, a.seed, a.image_size, "train", sink);
  const SyntheticData test =
      generate_synthetic(a.n_test, a.seed ^ 0x9e3779b97f4a7c15ULL, a.image_size, "test", sink);

  write_vocab(layout.data() / "objects.txt", train.split.object_vocab);
  write_vocab(layout.data() / "predicates.txt", train.split.predicate_vocab);
  write_annotations(layout.annotations(SplitName::Train), train.split);
  write_annotations(layout.annotations(SplitName::Test), test.split);
  for (const auto& p : {layout.annotations(SplitName::Train), layout.annotations(SplitName::Test),
                        layout.data() / "objects.txt", layout.data() / "predicates.txt",
                        layout.images()}) {
    rec.output(p);
  }
  rec.finish();
  out << fmt::format("synth: {} train and {} test instances in {}\n", a.n, a.n_test,
                     layout.data().string());
}

// preprocess -----------------------------------------------------------------

struct PreprocessArgs {
  std::string method;
  SplitSource source;
  std::string out_dir;
  std::string layout = "per-object-gray";
  int size = 224;
};

void run_preprocess(const Layout& layout, const PreprocessArgs& a, std::ostream& out) {
  const Method method = parse_method(a.method);
  const std::string token(method_token(method));
  Recorder rec(layout, "preprocess", fmt::format("{}_{}", token, split_name(a.source.name())));
  TransformOptions options;
  options.target_size = a.size;
  if (a.layout == "per-object-gray") {
    options.wbandb_layout = WBandBLayout::PerObjectGray;
  } else if (a.layout == "gray-plus-masks") {
    options.wbandb_layout = WBandBLayout::GrayPlusMasks;
  } else {
    throw UsageError(fmt::format("unknown --wbandb-layout '{}'", a.layout));
  }
  rec.config("method", token);
  rec.config("size", std::to_string(a.size));
  rec.config("wbandb_layout", a.layout);

  const DatasetSplit split = a.source.load(layout, rec);
  const fs::path dir = a.out_dir.empty() ? layout.dataset(token, split.name) : fs::path(a.out_dir);
  const EmitResult result = emit_dataset(split, a.source.image_root(layout), method, dir, options);
  write_vocab(dir / "predicates.txt", split.predicate_vocab);
  rec.output(dir / std::string(kManifestFile));
  rec.output(dir / "predicates.txt");
  rec.finish();
  out << fmt::format("preprocess: {} {} -> {} images ({} skipped) in {}\n", token,
                     split_name(split.name), result.rows.size(), result.skipped.size(), dir.string());
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::string method;
  std::string config;
  std::string dataset;
  std::string model;
  std::optional<int> batch_size;
  std::optional<double> momentum;
  std::optional<std::string> phases;
  std::optional<std::uint64_t> seed;
};

std::string phases_text(const TrainConfig& c) {
  std::string text;
  for (const auto& p : c.phases) {
    if (!text.empty()) text += ',';
    text += fmt::format("{}:{}", format_double(p.learning_rate), p.epochs);
  }
  return text;
}

void run_train(const Layout& layout, const TrainArgs& a, std::ostream& out) {
  const std::string token(method_token(parse_method(a.method)));
  Recorder rec(layout, "train", token);

  TrainConfig config;
  if (!a.config.empty()) {
    config = parse_train_config(read_text(a.config));
    rec.input(a.config);
  }
  // Flags override the config file.
  std::string overrides;
  if (a.batch_size) overrides += fmt::format("batch_size={}\n", *a.batch_size);
  if (a.momentum) overrides += fmt::format("momentum={}\n", format_double(*a.momentum));
  if (a.phases) overrides += fmt::format("phases={}\n", *a.phases);
  if (a.seed) overrides += fmt::format("seed={}\n", *a.seed);
  config = parse_train_config(overrides, config);

  const fs::path dataset = a.dataset.empty() ? layout.dataset(token, SplitName::Train) : fs::path(a.dataset);
  require_file(dataset / std::string(kManifestFile), "preprocessed dataset manifest");
  require_file(dataset / "predicates.txt", "dataset predicate vocabulary");
  const auto vocab = read_vocab(dataset / "predicates.txt");
  const FeatureSet data = load_feature_set(dataset);
  if (data.instance_ids.empty()) throw DataError(fmt::format("{}: dataset is empty", dataset.string()));

  rec.seed(config.seed);
  rec.config("method", token);
  rec.config("dataset", layout.show(dataset));
  rec.config("batch_size", std::to_string(config.batch_size));
  rec.config("momentum", format_double(config.momentum));
  rec.config("phases", phases_text(config));
  rec.config("seed", std::to_string(config.seed));
  rec.input(dataset / std::string(kManifestFile));

  std::string log_csv = "phase,epoch,learning_rate,mean_loss\n";
  const SoftmaxModel model =
      train(config, SoftmaxModel::zeros(data.channels, vocab.size()), data.features, data.labels,
            [&](const EpochLog& e) {
              log_info("phase {} epoch {} lr {} loss {:.6f}", e.phase, e.epoch, e.learning_rate,
                       e.mean_loss);
              log_csv += fmt::format("{},{},{},{}\n", e.phase, e.epoch,
                                     format_double(e.learning_rate), format_double(e.mean_loss));
            });
  const fs::path model_path = a.model.empty() ? layout.models() / (token + ".vrdm") : fs::path(a.model);
  fs::create_directories(model_path.parent_path());
  save_model(model_path, model);
  const fs::path log_path = fs::path(model_path).replace_extension(".train.csv");
  write_text(log_path, log_csv);
  rec.output(model_path);
  rec.output(log_path);
  rec.finish();
  out << fmt::format("train: {} on {} instances -> {}\n", token, data.instance_ids.size(),
                     model_path.string());
}

// predict --------------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string method;
  std::string split = "test";
  std::string dataset;
  std::string scores;
};

void run_predict(const Layout& layout, const PredictArgs& a, std::ostream& out) {
  const SplitName split = parse_split_name(a.split);
  std::string token;
  if (!a.method.empty()) token = method_token(parse_method(a.method));
  if (a.model.empty() && token.empty()) throw UsageError("predict needs --model or --method");
  if (a.dataset.empty() && token.empty()) throw UsageError("predict needs --dataset or --method");
  if (token.empty()) token = fs::path(a.model).stem().string();

  Recorder rec(layout, "predict", fmt::format("{}_{}", token, split_name(split)));
  const fs::path model_path = a.model.empty() ? layout.models() / (token + ".vrdm") : fs::path(a.model);
  const fs::path dataset = a.dataset.empty() ? layout.dataset(token, split) : fs::path(a.dataset);
  require_file(model_path, "model");
  require_file(dataset / std::string(kManifestFile), "preprocessed dataset manifest");
  rec.config("method", token);
  rec.config("split", std::string(split_name(split)));
  rec.config("model", layout.show(model_path));
  rec.config("dataset", layout.show(dataset));
  rec.input(model_path);
  rec.input(dataset / std::string(kManifestFile));

  const SoftmaxModel model = load_model(model_path);
  const ScoreMatrix scores = predict_scores(model, load_feature_set(dataset));
  const fs::path scores_path = a.scores.empty()
                                   ? layout.scores() / fmt::format("{}_{}.csv", token, split_name(split))
                                   : fs::path(a.scores);
  fs::create_directories(scores_path.parent_path());
  write_scores(scores_path, scores);
  rec.output(scores_path);
  rec.finish();
  out << fmt::format("predict: {} rows -> {}\n", scores.instance_ids.size(), scores_path.string());
}

// evaluate -------------------------------------------------------------------

constexpr std::string_view kDefaultKs = "1,2,3,5,8,10";

struct EvaluateArgs {
  std::string scores;
  std::string method;
  std::string ks;
  SplitSource source;
};

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> ks;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      ks.push_back(k);
    } catch (const std::exception&) {
      throw UsageError(fmt::format("--k: '{}' is not an integer", item));
    }
  }
  if (ks.empty()) throw UsageError("--k needs at least one value");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

std::string eval_stem(const std::string& method, SplitName split) {
  return fmt::format("{}_{}", method, split_name(split));
}

void run_evaluate(const Layout& layout, const EvaluateArgs& a, std::ostream& out) {
  require_file(a.scores, "scores file");
  std::vector<int> ks = parse_ks(a.ks.empty() ? std::string(kDefaultKs) : a.ks);
  const std::string method = a.method.empty() ? fs::path(a.scores).stem().string() : a.method;
  const SplitName split_id = a.source.name();
  Recorder rec(layout, "evaluate", eval_stem(method, split_id));
  rec.config("method", method);

  rec.config("scores", layout.show(a.scores));
  rec.input(a.scores);

  const DatasetSplit split = a.source.load(layout, rec);
  const ScoreMatrix scores = read_scores(a.scores);
  // The default list is cut to the number of predicates; explicit values
  // must all be valid.
  if (a.ks.empty()) {
    std::erase_if(ks, [&](int k) { return static_cast<std::size_t>(k) > scores.num_predicates(); });
  }
  std::vector<std::string> k_text;
  for (const int k : ks) k_text.push_back(std::to_string(k));
  rec.config("k", csv::join(k_text));
  for (const int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) > scores.num_predicates()) {
      throw UsageError(fmt::format("--k value {} outside [1, {}]", k, scores.num_predicates()));
    }
  }

  const std::string stem = eval_stem(method, split.name);
  RecallRow row{method, {}};
  std::string eval_csv = "method,split,k,recall\n";
  for (const int k : ks) {
    const double r = 100.0 * recall_at_k(scores, split, k);
    row.recall[k] = r;
    eval_csv += csv::join({method, std::string(split_name(split.name)), std::to_string(k), format_double(r)}) + "\n";
  }

  std::string per_csv = "predicate_id,predicate,support,recall\n";
  for (const auto& [p, cr] : per_predicate_recall(scores, split, 1)) {
    per_csv += csv::join({std::to_string(p), split.predicate_vocab.at(p), std::to_string(cr.support),
                          format_double(100.0 * cr.recall)}) +
               "\n";
  }

  const auto cm = confusion_top1(scores, split);
  std::vector<std::string> header{"ground_truth"};
  header.insert(header.end(), split.predicate_vocab.begin(), split.predicate_vocab.end());
  std::string confusion_csv = csv::join(header) + "\n";
  for (std::size_t g = 0; g < cm.size(); ++g) {
    std::vector<std::string> line{split.predicate_vocab[g]};
    for (const auto c : cm[g]) line.push_back(std::to_string(c));
    confusion_csv += csv::join(line) + "\n";
  }

  const std::string table = render_recall_table({row});
  const fs::path dir = layout.reports();
  const std::vector<std::pair<fs::path, const std::string*>> files = {
      {dir / ("eval_" + stem + ".csv"), &eval_csv},
      {dir / ("per_predicate_" + stem + ".csv"), &per_csv},
      {dir / ("confusion_" + stem + ".csv"), &confusion_csv},
      {dir / ("eval_" + stem + ".txt"), &table},
  };
  for (const auto& [path, text] : files) {
    write_text(path, *text);
    rec.output(path);
  }
  rec.finish();
  out << table;
}

// tukey ----------------------------------------------------------------------

struct TukeyArgs {
  std::string runs;
  double alpha = 0.05;
  std::string name = "tukey";
};

void run_tukey(const Layout& layout, const TukeyArgs& a, std::ostream& out) {
  require_file(a.runs, "runs file");
  Recorder rec(layout, "tukey", a.name == "tukey" ? "" : a.name);
  rec.config("alpha", format_double(a.alpha));
  rec.config("runs", layout.show(a.runs));
  rec.input(a.runs);
  const auto result = stats::tukey_hsd(stats::read_runs(a.runs), a.alpha);
  const std::string table = stats::render_grouping_table(result);
  const fs::path csv_path = layout.reports() / (a.name + ".csv");
  const fs::path txt_path = layout.reports() / (a.name + ".txt");
  write_text(csv_path, stats::render_grouping_csv(result));
  write_text(txt_path, table);
  rec.output(csv_path);
  rec.output(txt_path);
  rec.finish();
  out << table;
}

// report ---------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> evals;
  std::string split = "test";
  std::string runs;
  std::string tags;
  double alpha = 0.05;
};

struct EvalFile {
  std::string method;
  std::string split;
  std::map<int, double> recall;
};

EvalFile read_eval(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(fmt::format("evaluation file not found: {}", path.string()));
  const auto records = csv::read_all(in);
  if (records.empty() || records[0] != std::vector<std::string>{"method", "split", "k", "recall"}) {
    throw DataError(fmt::format("{}: header must be method,split,k,recall", path.string()));
  }
  EvalFile e;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.size() != 4) throw DataError(fmt::format("{}: line {} needs 4 fields", path.string(), i + 1));
    if (i == 1) {
      e.method = r[0];
      e.split = r[1];
    } else if (r[0] != e.method || r[1] != e.split) {
      throw DataError(fmt::format("{}: line {} mixes methods or splits", path.string(), i + 1));
    }
    const std::string where = fmt::format("{} line {}", path.string(), i + 1);
    e.recall[static_cast<int>(csv::to_int(r[2], where))] = csv::to_double(r[3], where);
  }
  if (e.recall.empty()) throw DataError(fmt::format("{}: no rows", path.string()));
  return e;
}

std::optional<PredicateColumn> read_per_predicate(const fs::path& path, const std::string& method,
                                                  std::vector<std::string>& order) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  const auto records = csv::read_all(in);
  PredicateColumn col{method, {}};
  std::vector<std::pair<long long, std::string>> ids;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.size() != 4) throw DataError(fmt::format("{}: line {} needs 4 fields", path.string(), i + 1));
    const std::string where = fmt::format("{} line {}", path.string(), i + 1);
    col.recall[r[1]] = csv::to_double(r[3], where);
    if (std::find(order.begin(), order.end(), r[1]) == order.end()) order.push_back(r[1]);
  }
  return col;
}

void run_report(const Layout& layout, const ReportArgs& a, std::ostream& out) {
  const SplitName split = parse_split_name(a.split);
  Recorder rec(layout, "report", std::string(split_name(split)));
  rec.config("split", std::string(split_name(split)));

  std::vector<fs::path> evals(a.evals.begin(), a.evals.end());
  if (evals.empty()) {
    const std::string suffix = fmt::format("_{}.csv", split_name(split));
    if (fs::is_directory(layout.reports())) {
      for (const auto& entry : fs::directory_iterator(layout.reports())) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("eval_", 0) == 0 && name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
          evals.push_back(entry.path());
        }
      }
    }
    std::sort(evals.begin(), evals.end());
  }
  if (evals.empty()) {
    throw UsageError(fmt::format("no evaluation files for split {} under {}", split_name(split),
                                 layout.reports().string()));
  }

  std::vector<RecallRow> rows;
  std::vector<PredicateColumn> columns;
  std::vector<std::string> predicate_order;
  std::string recall_csv;
  std::set<int> ks;
  std::vector<std::string> inputs;
  for (const auto& path : evals) {
    const EvalFile e = read_eval(path);
    if (e.split != split_name(split)) {
      throw DataError(fmt::format("{}: split {} does not match --split {}", path.string(), e.split,
                                  split_name(split)));
    }
    rec.input(path);
    inputs.push_back(layout.show(path));
    rows.push_back({e.method, e.recall});
    for (const auto& [k, v] : e.recall) ks.insert(k);
    const fs::path per = path.parent_path() /
                         ("per_predicate_" + path.filename().string().substr(std::string("eval_").size()));
    if (auto col = read_per_predicate(per, e.method, predicate_order)) {
      rec.input(per);
      columns.push_back(std::move(*col));
    }
  }
  rec.config("evals", csv::join(inputs));

  std::string text = fmt::format("Recall@k on the {} split (%)\n\n", split_name(split));
  text += render_recall_table(rows);

  std::stable_sort(rows.begin(), rows.end(), [](const RecallRow& x, const RecallRow& y) {
    const auto r1 = [](const RecallRow& r) {
      const auto it = r.recall.find(1);
      return it == r.recall.end() ? -1.0 : it->second;
    };
    return r1(x) > r1(y);
  });
  std::vector<std::string> header{"method"};
  for (const int k : ks) header.push_back(fmt::format("R@{}", k));
  recall_csv = csv::join(header) + "\n";
  for (const auto& r : rows) {
    std::vector<std::string> line{r.method};
    for (const int k : ks) {
      const auto it = r.recall.find(k);
      line.push_back(it == r.recall.end() ? "" : format_double(it->second));
    }
    recall_csv += csv::join(line) + "\n";
  }

  if (!columns.empty()) {
    text += "\nPer-predicate Recall@1 (%)\n\n";
    text += render_per_predicate_table(columns, predicate_order);
  }

  std::vector<std::pair<fs::path, std::string>> files;
  if (!a.runs.empty()) {
    require_file(a.runs, "runs file");
    rec.input(a.runs);
    rec.config("runs", layout.show(a.runs));
    rec.config("alpha", format_double(a.alpha));
    const auto groups = stats::read_runs(a.runs);
    bool enough = groups.size() >= 2;
    for (const auto& g : groups) enough = enough && g.values.size() >= 2;
    if (enough) {
      const auto result = stats::tukey_hsd(groups, a.alpha);
      text += fmt::format("\nMean Recall@1 with Tukey HSD groups (alpha = {})\n\n", format_double(a.alpha));
      text += stats::render_grouping_table(result);
      files.emplace_back(layout.reports() / fmt::format("report_{}_groups.csv", split_name(split)),
                         stats::render_grouping_csv(result));
    } else {
      log_warn("{}: Tukey groups need at least 2 methods with 2 runs each; skipped", a.runs);
    }
  }

  if (!a.tags.empty()) {
    require_file(a.tags, "error tag file");
    rec.input(a.tags);
    rec.config("tags", layout.show(a.tags));
    const auto pct = aggregate_error_tags(read_error_tags(a.tags));
    std::vector<std::pair<ErrorCategory, double>> sorted(pct.begin(), pct.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& x, const auto& y) { return x.second > y.second; });
    std::size_t width = 0;
    for (const auto& [c, v] : sorted) width = std::max(width, error_category_name(c).size());
    text += "\nError categories (% of tagged instances)\n\n";
    std::string tags_csv = "category,percent\n";
    for (const auto& [c, v] : sorted) {
      text += fmt::format("{:<{}} | {:6.2f}\n", error_category_name(c), width, v);
      tags_csv += fmt::format("{},{}\n", error_category_name(c), format_double(v));
    }
    files.emplace_back(layout.reports() / fmt::format("report_{}_errors.csv", split_name(split)), tags_csv);
  }

  files.emplace_back(layout.reports() / fmt::format("report_{}.csv", split_name(split)), recall_csv);
  files.emplace_back(layout.reports() / fmt::format("report_{}.txt", split_name(split)), text);
  for (const auto& [path, body] : files) {
    write_text(path, body);
    rec.output(path);
  }
  rec.finish();
  out << text;
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::replace(text.begin(), text.end(), '\r', ' ');
  return text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual relationship preprocessing and evaluation toolkit", "vrdtool"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(tool_version()));

  Common common;
  app.add_option("--out", common.out_root, "output root (default $VRD_OUT_ROOT or ./vrd_out)");
  app.add_flag("-v,--verbose", common.verbose, "log progress to stderr");
  app.add_option("--simd", common.simd, "kernel level: scalar or avx2 (default: detect)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic spatial-relation dataset");
  synth_cmd->add_option("--n", synth.n, "training instances")->capture_default_str();
  synth_cmd->add_option("--n-test", synth.n_test, "test instances")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--image-size", synth.image_size, "image side in pixels")
      ->check(CLI::Range(32, 1024))
      ->capture_default_str();

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "emit preprocessed rasters for one method");
  pre_cmd->add_option("--method", pre.method, "method token or label, e.g. UnionWBB")->required();
  pre.source.add_options(pre_cmd);
  pre_cmd->add_option("--dataset-dir", pre.out_dir, "output directory (default under the out root)");
  pre_cmd->add_option("--size", pre.size, "output side in pixels")
      ->check(CLI::Range(8, 2048))
      ->capture_default_str();
  pre_cmd->add_option("--wbandb-layout", pre.layout, "per-object-gray or gray-plus-masks")
      ->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train the softmax predictor");
  train_cmd->add_option("--method", tr.method)->required();
  train_cmd->add_option("--config", tr.config, "key=value training config");
  train_cmd->add_option("--dataset", tr.dataset, "preprocessed training directory");
  train_cmd->add_option("--model", tr.model, "checkpoint path");
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--momentum", tr.momentum);
  train_cmd->add_option("--phases", tr.phases, "lr:epochs,...");
  train_cmd->add_option("--seed", tr.seed);

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "score a preprocessed split");
  predict_cmd->add_option("--model", pr.model);
  predict_cmd->add_option("--method", pr.method);
  predict_cmd->add_option("--split", pr.split)->capture_default_str();
  predict_cmd->add_option("--dataset", pr.dataset, "preprocessed directory");
  predict_cmd->add_option("--scores", pr.scores, "output CSV");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Recall@k, per-predicate recall and confusion");
  eval_cmd->add_option("--scores", ev.scores)->required();
  eval_cmd->add_option("--method", ev.method, "label in reports (default: scores file stem)");
  eval_cmd->add_option("--k", ev.ks, "comma-separated k values (default 1,2,3,5,8,10 up to the predicate count)");
  ev.source.add_options(eval_cmd);

  TukeyArgs tk;
  auto* tukey_cmd = app.add_subcommand("tukey", "Tukey HSD groups over repeated runs");
  tukey_cmd->add_option("--runs", tk.runs, "CSV architecture,method,run_index,recall")->required();
  tukey_cmd->add_option("--alpha", tk.alpha)->check(CLI::Range(1e-6, 0.5))->capture_default_str();
  tukey_cmd->add_option("--name", tk.name, "report file stem")->capture_default_str();

  ReportArgs rp;
  auto* report_cmd = app.add_subcommand("report", "join evaluations into summary tables");
  report_cmd->add_option("--evals", rp.evals, "evaluation CSVs (default: all for --split)");
  report_cmd->add_option("--split", rp.split)->capture_default_str();
  report_cmd->add_option("--runs", rp.runs, "repeated-run CSV for Tukey groups");
  report_cmd->add_option("--alpha", rp.alpha)->check(CLI::Range(1e-6, 0.5))->capture_default_str();
  report_cmd->add_option("--tags", rp.tags, "error tag CSV instance_id,category");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << tool_version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    set_log_level(common.verbose ? LogLevel::Info : LogLevel::Quiet);
    if (!common.simd.empty()) {
      if (common.simd == "scalar") {
        simd::set_level(simd::Level::Scalar);
      } else if (common.simd == "avx2") {
        if (!simd::cpu_supports(simd::Level::Avx2) || !simd::avx2_kernels()) {
          throw UsageError("--simd avx2 is not available on this machine");
        }
        simd::set_level(simd::Level::Avx2);
      } else {
        throw UsageError(fmt::format("unknown --simd level '{}'", common.simd));
      }
    }
    Layout layout;
    if (!common.out_root.empty()) {
      layout.root = common.out_root;
    } else if (const char* env = std::getenv(kOutRootEnv.data()); env && *env) {
      layout.root = env;
    } else {
      layout.root = kDefaultOutRoot;
    }

    if (*synth_cmd) run_synth(layout, synth, out);
    else if (*pre_cmd) run_preprocess(layout, pre, out);
    else if (*train_cmd) run_train(layout, tr, out);
    else if (*predict_cmd) run_predict(layout, pr, out);
    else if (*eval_cmd) run_evaluate(layout, ev, out);
    else if (*tukey_cmd) run_tukey(layout, tk, out);
    else if (*report_cmd) run_report(layout, rp, out);
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: data: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: runtime: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  }
}

}  // namespace vrd::cli
