#include "commands.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cssim/analysis.hpp"
#include "cssim/checkpoint.hpp"
#include "cssim/dataset.hpp"
#include "cssim/embedding_store.hpp"
#include "cssim/errors.hpp"
#include "cssim/evaluation.hpp"
#include "cssim/io.hpp"
#include "cssim/synthetic.hpp"
#include "cssim/training.hpp"

namespace cssim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Records what a command read and wrote; written atomically as
// <primary output>.manifest.json once the command succeeds.
class Manifest {
 public:
  Manifest(std::string command, const CLI::App& sub, std::uint64_t seed)
      : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["config"] = sub.config_to_str(true, false);
    doc_["seed"] = seed;
    doc_["tool_version"] = kToolVersion;
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::array();
  }

  void input(const fs::path& path) { doc_["inputs"][path.string()] = io::sha256_file(path); }
  void output(const fs::path& path) { doc_["outputs"].push_back(path.string()); }

  void write(const fs::path& manifest_path) {
    doc_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::write_file_atomic(manifest_path, doc_.dump(2) + "\n");
  }

  void write_beside(const fs::path& primary) {
    auto p = primary;
    p += ".manifest.json";
    write(p);
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads (results do not depend on this)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError("not a number: '" + item + "'");
    }
  }
  return out;
}

std::vector<ImageId> parse_id_list(const std::string& text) {
  std::vector<ImageId> out;
  std::stringstream ss(text);
  std::string item;
  while (ss >> std::ws && std::getline(ss, item, ',')) {
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.pop_back();
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError("not an image id: '" + item + "'");
    }
  }
  return out;
}

// --- convert / split --------------------------------------------------------

struct RatioOptions {
  double train = 0.8, val = 0.1, test = 0.1;
  SplitRatios get() const { return {train, val, test}; }
};

void add_ratios(CLI::App* sub, RatioOptions& r) {
  sub->add_option("--train-ratio", r.train)->capture_default_str();
  sub->add_option("--val-ratio", r.val)->capture_default_str();
  sub->add_option("--test-ratio", r.test)->capture_default_str();
}

struct ConvertOptions {
  Common common;
  RatioOptions ratios;
  std::string trials, classes, out;
  bool shuffle_order = false;
};

int cmd_convert(const ConvertOptions& o, const CLI::App& sub, std::ostream& out) {
  Manifest manifest("convert", sub, o.common.seed);
  const auto trials = parse_trials(o.trials);
  manifest.input(o.trials);
  if (trials.empty()) throw ValidationError("no trials");
  const auto classes = load_class_map(o.classes);
  manifest.input(o.classes);

  const auto splits = stratified_split(std::span<const TrialRecord>(trials), o.ratios.get(), o.common.seed);
  std::vector<ContextTriplet> expanded;
  expanded.reserve(trials.size() * 6);
  for (const auto& t : trials) {
    auto six = expand_to_triplets(t);
    expanded.insert(expanded.end(), six.begin(), six.end());
  }
  assign_splits(expanded, splits);
  auto kept = filter_class_collisions(expanded, classes);
  if (o.shuffle_order) kept = shuffle_triplet_order(kept, o.common.seed);
  write_triplets(kept, o.out);
  manifest.output(o.out);

  const auto filtered = expanded.size() - kept.size();
  out << fmt::format("trials_in={} triplets_out={} filtered={}\n", trials.size(), kept.size(), filtered);
  manifest.write_beside(o.out);
  return kOk;
}

struct SplitOptions {
  Common common;
  RatioOptions ratios;
  std::string trials, out;
};

int cmd_split(const SplitOptions& o, const CLI::App& sub, std::ostream& out) {
  Manifest manifest("split", sub, o.common.seed);
  const auto trials = parse_trials(o.trials);
  manifest.input(o.trials);
  const auto splits = stratified_split(std::span<const TrialRecord>(trials), o.ratios.get(), o.common.seed);
  std::map<std::uint64_t, std::uint64_t> participant;
  for (const auto& t : trials) participant[t.trial_id] = t.participant_id;
  std::string csv = "trial_id,participant_id,split\n";
  std::array<std::size_t, 3> counts{};
  for (const auto& [id, split] : splits) {
    csv += fmt::format("{},{},{}\n", id, participant[id], to_string(split));
    ++counts[static_cast<std::size_t>(split)];
  }
  io::write_file_atomic(o.out, csv);
  manifest.output(o.out);
  out << fmt::format("train={} val={} test={}\n", counts[0], counts[1], counts[2]);
  manifest.write_beside(o.out);
  return kOk;
}

// --- train / gridsearch -----------------------------------------------------

struct TrainOptions {
  Common common;
  std::string embeddings, triplets, out, history;
  std::string model = "cs";
  std::string context_input = "normalized";
  std::string train_split = "train", val_split = "val";
  TrainConfig config;
  double init_scale = -1;
  bool no_shuffle = false, no_mapper_bias = false;

  // gridsearch only
  std::string r_grid = "16,32", lambda1_grid = "1e-4,1e-3", lambda2_grid = "1e-5,1e-4,1e-3",
              tau_grid = "1.0,5.0,7.5", results;
};

void add_train_options(CLI::App* sub, TrainOptions& o) {
  add_common(sub, o.common);
  sub->add_option("--embeddings", o.embeddings, "Embedding file")->required();
  sub->add_option("--triplets", o.triplets, "Split-tagged triplets file")->required();
  sub->add_option("--out", o.out, "Checkpoint to write")->required();
  sub->add_option("--history", o.history, "Per-epoch history CSV");
  sub->add_option("--model", o.model, "cs (context-sensitive) or ci (context-insensitive)")
      ->check(CLI::IsMember({"cs", "ci"}))
      ->capture_default_str();
  sub->add_option("--context-input", o.context_input, "Mapper input: normalized, cit or raw")
      ->check(CLI::IsMember({"normalized", "cit", "raw"}))
      ->capture_default_str();
  sub->add_option("--epochs", o.config.epochs)->capture_default_str();
  sub->add_option("--learning-rate", o.config.learning_rate)->capture_default_str();
  sub->add_option("--batch-size", o.config.batch_size)->capture_default_str();
  sub->add_option("--lambda1", o.config.lambda1, "Weight of ‖W - I‖_F²")->capture_default_str();
  sub->add_option("--lambda2", o.config.lambda2, "Weight of mean ‖A_c - I‖_F²")->capture_default_str();
  sub->add_option("--r", o.config.r, "Rank of B_c")->capture_default_str();
  sub->add_option("--tau", o.config.tau, "Softmax temperature")->capture_default_str();
  sub->add_option("--init-scale", o.init_scale, "Std of mapper init (default 1e-2/sqrt(d))");
  sub->add_flag("--no-shuffle", o.no_shuffle, "Keep minibatch order fixed across epochs");
  sub->add_flag("--no-mapper-bias", o.no_mapper_bias, "Drop the mapper bias m0");
  sub->add_option("--train-split", o.train_split)->capture_default_str();
  sub->add_option("--val-split", o.val_split)->capture_default_str();
}

TrainConfig resolve_config(const TrainOptions& o) {
  TrainConfig c = o.config;
  c.seed = o.common.seed;
  c.threads = o.common.threads;
  c.shuffle = !o.no_shuffle;
  c.mapper_bias = !o.no_mapper_bias;
  c.kind = o.model == "ci" ? ModelKind::kContextInsensitive : ModelKind::kContextSensitive;
  c.context_input = o.context_input == "cit"   ? ContextInput::kCit
                    : o.context_input == "raw" ? ContextInput::kRaw
                                               : ContextInput::kNormalized;
  if (o.init_scale >= 0) c.init_scale = o.init_scale;
  return c;
}

json config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size}, {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},     {"r", c.r},
          {"tau", c.tau},             {"seed", c.seed},
          {"shuffle", c.shuffle},     {"model", c.kind == ModelKind::kContextSensitive ? "cs" : "ci"}};
}

struct TrainingData {
  EmbeddingStore store;
  std::vector<ContextTriplet> train, val;
  std::string data_hash;
};

TrainingData load_training_data(const TrainOptions& o, Manifest& manifest) {
  TrainingData data{load_embeddings(o.embeddings), {}, {}, {}};
  manifest.input(o.embeddings);
  const auto all = parse_triplets(o.triplets);
  manifest.input(o.triplets);
  data.train = select_split(all, parse_split(o.train_split));
  data.val = select_split(all, parse_split(o.val_split));
  if (data.train.empty()) throw ValidationError("no triplets tagged '" + o.train_split + "'");
  data.data_hash = io::sha256_file(o.embeddings) + ":" + io::sha256_file(o.triplets);
  return data;
}

void write_trained(const TrainOptions& o, const TrainConfig& c, const TrainResult& result,
                   const std::string& data_hash, Manifest& manifest) {
  json meta = config_json(c);
  meta["data_hash"] = data_hash;
  meta["best_epoch"] = result.history.best_epoch;
  write_checkpoint({result.params, meta}, o.out);
  manifest.output(o.out);
  if (!o.history.empty()) {
    io::write_file_atomic(o.history, format_history_csv(result.history));
    manifest.output(o.history);
  }
}

void write_last_finite(const TrainOptions& o, const TrainConfig& c, const DivergenceError& e) {
  if (!e.last_finite()) return;
  json meta = config_json(c);
  meta["diverged"] = e.what();
  write_checkpoint({*e.last_finite(), meta}, o.out);
}

int cmd_train(const TrainOptions& o, const CLI::App& sub, std::ostream& out) {
  const TrainConfig config = resolve_config(o);
  Manifest manifest("train", sub, config.seed);
  const auto data = load_training_data(o, manifest);
  TrainResult result;
  try {
    result = train(config, data.train, data.val, data.store);
  } catch (const DivergenceError& e) {
    write_last_finite(o, config, e);
    throw;
  }
  write_trained(o, config, result, data.data_hash, manifest);
  const auto& h = result.history;
  for (const auto& e : h.epochs) {
    out << fmt::format("epoch {} loss {:.6f} val_acc {:.4f}\n", e.epoch, e.loss, e.val_acc);
  }
  out << fmt::format("best_epoch={}\n", h.best_epoch);
  manifest.write_beside(o.out);
  return kOk;
}

int cmd_gridsearch(const TrainOptions& o, const CLI::App& sub, std::ostream& out) {
  const TrainConfig base = resolve_config(o);
  Manifest manifest("gridsearch", sub, base.seed);
  const auto data = load_training_data(o, manifest);
  HyperGrid grid;
  grid.r.clear();
  for (double v : parse_double_list(o.r_grid)) grid.r.push_back(static_cast<int>(v));
  grid.lambda1 = parse_double_list(o.lambda1_grid);
  grid.lambda2 = parse_double_list(o.lambda2_grid);
  grid.tau = parse_double_list(o.tau_grid);

  const auto result = grid_search(base, grid, data.train, data.val, data.store);
  const auto& chosen = result.runs[result.best_index].config;
  write_trained(o, chosen, result.best, data.data_hash, manifest);
  if (!o.results.empty()) {
    io::write_file_atomic(o.results, format_grid_csv(result));
    manifest.output(o.results);
  }
  out << format_grid_csv(result);
  out << fmt::format("best: r={} lambda1={:g} lambda2={:g} tau={:g} val_acc={:.4f}\n", chosen.r, chosen.lambda1,
                     chosen.lambda2, chosen.tau, result.runs[result.best_index].val_acc);
  manifest.write_beside(o.out);
  return kOk;
}

// --- eval / bootstrap / upperbound ------------------------------------------

struct EvalOptions {
  Common common;
  std::string embeddings, triplets, report, pred_dir;
  std::string split = "test";
  std::vector<std::string> checkpoints;
  bool fm_baseline = false;
  bool permute = false;
};

int cmd_eval(const EvalOptions& o, const CLI::App& sub, std::ostream& out) {
  Manifest manifest("eval", sub, o.common.seed);
  const auto store = load_embeddings(o.embeddings);
  manifest.input(o.embeddings);
  const auto all = parse_triplets(o.triplets);
  manifest.input(o.triplets);
  auto triplets = o.split == "all" ? all : select_split(all, parse_split(o.split));
  if (triplets.empty()) throw ValidationError("no triplets in split '" + o.split + "'");
  if (o.permute) triplets = shuffle_triplet_order(triplets, o.common.seed);

  std::vector<std::pair<std::string, PredictionVector>> results;
  if (o.fm_baseline) results.emplace_back("fm_cosine", predict_baseline(store, triplets, BaselineMode::kFmCosine));
  for (const auto& spec : o.checkpoints) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const fs::path path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const auto ckpt = load_checkpoint(path);
    manifest.input(path);
    results.emplace_back(name, predict_model(ckpt.params, triplets, store, o.common.threads));
  }
  if (results.empty()) throw ValidationError("nothing to evaluate: pass --checkpoint or --fm-baseline");

  std::string report = "model,split,n_trials,accuracy\n";
  for (const auto& [name, preds] : results) {
    report += fmt::format("{},{},{},{:.6f}\n", name, o.split, preds.size(), accuracy(preds));
    if (!o.pred_dir.empty()) {
      fs::create_directories(o.pred_dir);
      const auto path = fs::path(o.pred_dir) / (name + ".preds.csv");
      io::write_file_atomic(path, format_predictions_csv(preds));
      manifest.output(path);
    }
  }
  out << report;
  if (!o.report.empty()) {
    io::write_file_atomic(o.report, report);
    manifest.output(o.report);
    manifest.write_beside(o.report);
  }
  return kOk;
}

struct BootstrapOptions {
  Common common;
  std::string a, b, name_a, name_b, out;
  int n_boot = 10000;
  double alpha = 0.05;
};

int cmd_bootstrap(const BootstrapOptions& o, const CLI::App& sub, std::ostream& out) {
  Manifest manifest("bootstrap", sub, o.common.seed);
  const auto a = parse_predictions_csv(io::read_file(o.a));
  manifest.input(o.a);
  const auto b = parse_predictions_csv(io::read_file(o.b));
  manifest.input(o.b);
  const auto r = paired_bootstrap(a, b, o.n_boot, o.alpha, o.common.seed, o.common.threads);
  const auto name_a = o.name_a.empty() ? fs::path(o.a).stem().stem().string() : o.name_a;
  const auto name_b = o.name_b.empty() ? fs::path(o.b).stem().stem().string() : o.name_b;
  const std::string csv = "model_a,model_b,delta,ci_low,ci_high,n_boot,seed\n" +
                          fmt::format("{},{},{:.6f},{:.6f},{:.6f},{},{}\n", name_a, name_b, r.delta_mean,
                                      r.ci_low, r.ci_high, r.n_boot, r.seed);
  out << csv << fmt::format("{} vs {}: {}\n", name_b, name_a, format_delta(r));
  if (!o.out.empty()) {
    io::write_file_atomic(o.out, csv);
    manifest.output(o.out);
    manifest.write_beside(o.out);
  }
  return kOk;
}

struct UpperBoundOptions {
  Common common;
  std::string triplets, classes, out;
  std::string split = "all";
};

int cmd_upperbound(const UpperBoundOptions& o, const CLI::App& sub, std::ostream& out) {
  Manifest manifest("upperbound", sub, o.common.seed);
  const auto all = parse_triplets(o.triplets);
  manifest.input(o.triplets);
  const auto classes = load_class_map(o.classes);
  manifest.input(o.classes);
  const auto triplets = o.split == "all" ? all : select_split(all, parse_split(o.split));
  const auto r = upper_bound(triplets, classes);
  auto num = [](const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string(); };
  const std::string csv =
      "group_mean,response_mean,groups_total,groups_retained,responses_retained,status\n" +
      fmt::format("{},{},{},{},{},{}\n", num(r.group_mean), num(r.response_mean), r.groups_total,
                  r.groups_retained, r.responses_retained, r.defined() ? "ok" : "insufficient_data");
  out << csv;
  if (!o.out.empty()) {
    io::write_file_atomic(o.out, csv);
    manifest.output(o.out);
    manifest.write_beside(o.out);
  }
  return kOk;
}

// --- rsm / pca --------------------------------------------------------------

struct ViewOptions {
  Common common;
  std::string checkpoint, embeddings, refs, refs_file, out;
  std::string mode = "cs";
  ImageId context = 0;
};

void add_view_options(CLI::App* sub, ViewOptions& o) {
  add_common(sub, o.common);
  sub->add_option("--checkpoint", o.checkpoint)->required();
  sub->add_option("--embeddings", o.embeddings)->required();
  sub->add_option("--context", o.context, "Context image id")->required();
  sub->add_option("--refs", o.refs, "Comma-separated image ids");
  sub->add_option("--refs-file", o.refs_file, "File with comma- or newline-separated image ids");
  sub->add_option("--mode", o.mode, "cs (context-sensitive) or cit (transform only)")
      ->check(CLI::IsMember({"cs", "cit"}))
      ->capture_default_str();
  sub->add_option("--out", o.out, "Output CSV")->required();
}

struct View {
  Checkpoint ckpt;
  EmbeddingStore store;
  std::vector<ImageId> ids;
  RsmMode mode;
};

View load_view(const ViewOptions& o, Manifest& manifest) {
  View v{load_checkpoint(o.checkpoint), load_embeddings(o.embeddings), {}, RsmMode::kContextSensitive};
  manifest.input(o.checkpoint);
  manifest.input(o.embeddings);
  std::string refs = o.refs;
  if (!o.refs_file.empty()) {
    refs = io::read_file(o.refs_file);
    std::replace(refs.begin(), refs.end(), '\n', ',');
    manifest.input(o.refs_file);
  }
  v.ids = parse_id_list(refs);
  if (v.ids.empty()) throw ValidationError("no reference ids given");
  v.mode = o.mode == "cit" ? RsmMode::kCitOnly : RsmMode::kContextSensitive;
  return v;
}

void write_view_metadata(const ViewOptions& o, const json& extra, Manifest& manifest) {
  json meta = extra;
  meta["context_id"] = o.context;
  meta["mode"] = o.mode == "cit" ? "cit_only" : "context_sensitive";
  meta["checkpoint_hash"] = io::sha256_file(o.checkpoint);
  auto path = fs::path(o.out);
  path += ".meta.json";
  io::write_file_atomic(path, meta.dump(2) + "\n");
  manifest.output(path);
}

int cmd_rsm(const ViewOptions& o, const CLI::App& sub, std::ostream& out) {
  Manifest manifest("rsm", sub, o.common.seed);
  const auto v = load_view(o, manifest);
  const auto rsm = compute_rsm(v.ckpt.params, o.context, v.ids, v.store, v.mode);
  io::write_file_atomic(o.out, format_rsm_csv(rsm));
  manifest.output(o.out);
  write_view_metadata(o, json::object(), manifest);
  out << fmt::format("wrote {}x{} RSM to {}\n", v.ids.size(), v.ids.size(), o.out);
  manifest.write_beside(o.out);
  return kOk;
}

int cmd_pca(const ViewOptions& o, const CLI::App& sub, std::ostream& out) {
  Manifest manifest("pca", sub, o.common.seed);
  const auto v = load_view(o, manifest);
  auto coords = pca_project(representation_vectors(v.ckpt.params, o.context, v.ids, v.store, v.mode), 2);
  coords.image_ids = v.ids;
  io::write_file_atomic(o.out, format_coords_csv(coords));
  manifest.output(o.out);
  write_view_metadata(o, {{"explained_variance", coords.explained_variance}}, manifest);
  out << fmt::format("explained variance: {:.4f} {:.4f}\n", coords.explained_variance[0],
                     coords.explained_variance[1]);
  manifest.write_beside(o.out);
  return kOk;
}

// --- synth ------------------------------------------------------------------

struct SynthOptions {
  Common common;
  SyntheticSpec spec;
  std::string out_dir;
};

int cmd_synth(const SynthOptions& o, const CLI::App& sub, std::ostream& out) {
  SyntheticSpec spec = o.spec;
  spec.seed = o.common.seed;
  Manifest manifest("synth", sub, spec.seed);
  const fs::path dir = o.out_dir;
  fs::create_directories(dir);

  const auto truth = gen_ground_truth(spec);
  const auto data = sample_dataset(spec, truth);
  write_embeddings(data.store, dir / "embeddings.bin");
  write_triplets(data.triplets, dir / "triplets.jsonl");
  io::write_file_atomic(dir / "classes.json", format_class_map(data.classes));
  write_checkpoint({truth, {{"synthetic", true}, {"context_free", spec.context_free}}}, dir / "truth.ckpt");

  json summary = {{"d", spec.d},
                  {"r_true", spec.r_true},
                  {"n_images", spec.n_images},
                  {"n_clusters", spec.n_clusters},
                  {"cluster_spread", spec.cluster_spread},
                  {"n_trials", spec.n_trials},
                  {"n_participants", spec.n_participants},
                  {"seed", spec.seed},
                  {"context_free", spec.context_free},
                  {"kernel_gain", spec.kernel_gain},
                  {"transform_noise", spec.transform_noise}};
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto part = select_split(data.triplets, s);
    summary["n_" + std::string(to_string(s))] = part.size();
    if (!part.empty()) {
      summary["bayes_accuracy_" + std::string(to_string(s))] = bayes_accuracy(truth, part, data.store);
    }
  }
  io::write_file_atomic(dir / "synth.json", summary.dump(2) + "\n");
  for (const char* name : {"embeddings.bin", "triplets.jsonl", "classes.json", "truth.ckpt", "synth.json"}) {
    manifest.output(dir / name);
  }
  out << summary.dump() << "\n";
  manifest.write(dir / "manifest.json");
  return kOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation:
    case ErrorKind::kLookup:
    case ErrorKind::kDegenerate: return kValidationFailure;
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
    case ErrorKind::kCorruption: return kIoFailure;
    case ErrorKind::kDivergence: return kDivergence;
  }
  return kValidationFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Context-sensitive similarity learning from fixed embeddings", "cssim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  ConvertOptions convert;
  auto* convert_cmd = app.add_subcommand("convert", "8-choose-2 trials -> split-tagged triplets with context");
  add_common(convert_cmd, convert.common);
  add_ratios(convert_cmd, convert.ratios);
  convert_cmd->add_option("--trials", convert.trials, "Trials JSONL")->required();
  convert_cmd->add_option("--classes", convert.classes, "Class map JSON")->required();
  convert_cmd->add_option("--out", convert.out, "Triplets JSONL to write")->required();
  convert_cmd->add_flag("--shuffle-order", convert.shuffle_order, "Randomly permute each triplet's image order");

  SplitOptions split;
  auto* split_cmd = app.add_subcommand("split", "Participant-stratified split of 8-choose-2 trials");
  add_common(split_cmd, split.common);
  add_ratios(split_cmd, split.ratios);
  split_cmd->add_option("--trials", split.trials, "Trials JSONL")->required();
  split_cmd->add_option("--out", split.out, "CSV trial_id,participant_id,split")->required();

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train one model by minibatch SGD");
  add_train_options(train_cmd, train_opts);

  TrainOptions grid_opts;
  auto* grid_cmd = app.add_subcommand("gridsearch", "Train over a hyperparameter grid, keep the best on val");
  add_train_options(grid_cmd, grid_opts);
  grid_cmd->add_option("--r-grid", grid_opts.r_grid)->capture_default_str();
  grid_cmd->add_option("--lambda1-grid", grid_opts.lambda1_grid)->capture_default_str();
  grid_cmd->add_option("--lambda2-grid", grid_opts.lambda2_grid)->capture_default_str();
  grid_cmd->add_option("--tau-grid", grid_opts.tau_grid)->capture_default_str();
  grid_cmd->add_option("--results", grid_opts.results, "Grid results CSV");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Odd-one-out accuracy report");
  add_common(eval_cmd, eval.common);
  eval_cmd->add_option("--embeddings", eval.embeddings)->required();
  eval_cmd->add_option("--triplets", eval.triplets)->required();
  eval_cmd->add_option("--split", eval.split, "train, val, test or all")->capture_default_str();
  eval_cmd->add_option("--checkpoint", eval.checkpoints, "NAME=PATH, repeatable");
  eval_cmd->add_flag("--fm-baseline", eval.fm_baseline, "Include the raw-embedding cosine baseline");
  eval_cmd->add_flag("--permute", eval.permute, "Randomly permute triplet image order before evaluating");
  eval_cmd->add_option("--report", eval.report, "Report CSV");
  eval_cmd->add_option("--pred-dir", eval.pred_dir, "Directory for <model>.preds.csv files");

  BootstrapOptions boot;
  auto* boot_cmd = app.add_subcommand("bootstrap", "Paired bootstrap of accuracy(b) - accuracy(a)");
  add_common(boot_cmd, boot.common);
  boot_cmd->add_option("--a", boot.a, "Predictions CSV of model a")->required();
  boot_cmd->add_option("--b", boot.b, "Predictions CSV of model b")->required();
  boot_cmd->add_option("--name-a", boot.name_a);
  boot_cmd->add_option("--name-b", boot.name_b);
  boot_cmd->add_option("--n-boot", boot.n_boot)->capture_default_str();
  boot_cmd->add_option("--alpha", boot.alpha)->capture_default_str();
  boot_cmd->add_option("--out", boot.out, "Bootstrap CSV");

  UpperBoundOptions ub;
  auto* ub_cmd = app.add_subcommand("upperbound", "Class-level upper bound on odd-one-out accuracy");
  add_common(ub_cmd, ub.common);
  ub_cmd->add_option("--triplets", ub.triplets)->required();
  ub_cmd->add_option("--classes", ub.classes)->required();
  ub_cmd->add_option("--split", ub.split)->capture_default_str();
  ub_cmd->add_option("--out", ub.out, "Result CSV");

  ViewOptions rsm;
  auto* rsm_cmd = app.add_subcommand("rsm", "Representational similarity matrix under a context");
  add_view_options(rsm_cmd, rsm);

  ViewOptions pca;
  auto* pca_cmd = app.add_subcommand("pca", "2-D PCA of (context-projected) embeddings");
  add_view_options(pca_cmd, pca);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic ground truth and dataset");
  add_common(synth_cmd, synth.common);
  synth_cmd->add_option("--out-dir", synth.out_dir)->required();
  synth_cmd->add_option("--d", synth.spec.d)->capture_default_str();
  synth_cmd->add_option("--r-true", synth.spec.r_true)->capture_default_str();
  synth_cmd->add_option("--n-images", synth.spec.n_images)->capture_default_str();
  synth_cmd->add_option("--n-clusters", synth.spec.n_clusters)->capture_default_str();
  synth_cmd->add_option("--cluster-spread", synth.spec.cluster_spread)->capture_default_str();
  synth_cmd->add_option("--n-trials", synth.spec.n_trials)->capture_default_str();
  synth_cmd->add_option("--n-participants", synth.spec.n_participants)->capture_default_str();
  synth_cmd->add_option("--kernel-gain", synth.spec.kernel_gain)->capture_default_str();
  synth_cmd->add_option("--transform-noise", synth.spec.transform_noise, "Std of W - I, times 1/sqrt(d)")
      ->capture_default_str();
  synth_cmd->add_flag("--context-free", synth.spec.context_free, "Constant B_c (negative control)");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidationFailure;
  }

  try {
    if (*convert_cmd) return cmd_convert(convert, *convert_cmd, out);
    if (*split_cmd) return cmd_split(split, *split_cmd, out);
    if (*train_cmd) return cmd_train(train_opts, *train_cmd, out);
    if (*grid_cmd) return cmd_gridsearch(grid_opts, *grid_cmd, out);
    if (*eval_cmd) return cmd_eval(eval, *eval_cmd, out);
    if (*boot_cmd) return cmd_bootstrap(boot, *boot_cmd, out);
    if (*ub_cmd) return cmd_upperbound(ub, *ub_cmd, out);
    if (*rsm_cmd) return cmd_rsm(rsm, *rsm_cmd, out);
    if (*pca_cmd) return cmd_pca(pca, *pca_cmd, out);
    if (*synth_cmd) return cmd_synth(synth, *synth_cmd, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  return kValidationFailure;
}

}  // namespace cssim::cli
