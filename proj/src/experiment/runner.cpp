#include "feddiff/experiment/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "feddiff/data/loaders.hpp"
#include "feddiff/data/synthetic.hpp"
#include "feddiff/eval/backend.hpp"
#include "feddiff/eval/evaluate.hpp"
#include "feddiff/experiment/artifacts.hpp"
#include "feddiff/fl/orchestrator.hpp"
#include "feddiff/nn/checkpoint.hpp"
#include "feddiff/simd/kernels.hpp"
#include "json.hpp"

namespace feddiff::experiment {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

fs::path resolve_output_root(const fs::path& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("FEDDIFF_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

fs::path resolve_output_root(const fs::path& explicit_root, const ExperimentConfig& config) {
  if (!explicit_root.empty()) return explicit_root;
  if (!config.output_root.empty()) return config.output_root;
  return resolve_output_root(fs::path{});
}

Datasets load_datasets(const DatasetSpec& spec) {
  if (spec.name == "synthetic") {
    data::SyntheticSpec s;
    s.num_classes = spec.num_classes;
    s.image_size = spec.image_size;
    s.channels = spec.channels;
    s.seed = spec.seed;
    s.num_samples = spec.train_samples;
    Datasets d;
    d.train = data::make_synthetic_shapes(s, data::Split::kTrain);
    s.num_samples = spec.test_samples;
    d.test = data::make_synthetic_shapes(s, data::Split::kTest);
    return d;
  }
  if (spec.name == "cifar10") {
    return {data::load_cifar10(spec.path, data::Split::kTrain, spec.image_size),
            data::load_cifar10(spec.path, data::Split::kTest, spec.image_size)};
  }
  if (spec.name == "fashion_mnist") {
    return {data::load_fashion_mnist(spec.path, data::Split::kTrain, spec.image_size),
            data::load_fashion_mnist(spec.path, data::Split::kTest, spec.image_size)};
  }
  if (spec.name == "image_folder") {
    const fs::path root(spec.path);
    Datasets d{data::load_image_folder(root / "train", spec.image_size, spec.channels,
                                       data::Split::kTrain),
               data::load_image_folder(root / "test", spec.image_size, spec.channels,
                                       data::Split::kTest)};
    if (d.train.num_classes() != d.test.num_classes()) {
      throw std::runtime_error("image folder: train and test have different class sets");
    }
    return d;
  }
  throw ConfigError("dataset.name: unknown dataset '" + spec.name + "'");
}

std::vector<data::ClientShard> make_shards(const ExperimentConfig& config,
                                           const data::LabeledDataset& train, int* attempts) {
  if (config.mode == Mode::kCentralized) {
    if (attempts) *attempts = 0;
    return {fl::whole_dataset_shard(train)};
  }
  data::PartitionResult p =
      data::dirichlet_partition(train.labels(), train.num_classes(), config.partition);
  if (attempts) *attempts = p.attempts;
  return std::move(p.shards);
}

ImageBatch generate_samples(const nn::Denoiser& denoiser, const nn::ParameterVector& params,
                            const fl::FLConfig& config, std::size_t n, Rng& rng) {
  const nn::DenoiserConfig& dc = denoiser.config();
  std::vector<int> labels;
  if (dc.class_conditional) {
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % dc.num_classes);
  }
  const auto sz = static_cast<std::size_t>(dc.image_size);
  return diffusion::generate(denoiser.predictor(params, std::move(labels)), config.schedule(), n,
                             static_cast<std::size_t>(dc.in_channels), sz, sz, rng,
                             config.variance);
}

std::string checkpoint_name(int round) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "round_%06d.ckpt", round);
  return buf;
}

std::vector<fs::path> list_checkpoints(const fs::path& run_dir) {
  std::vector<fs::path> out;
  const fs::path dir = run_dir / kCheckpointDir;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("round_", 0) == 0 && e.path().extension() == ".ckpt") {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

constexpr const char* kMetricsHeader =
    "round,participants,shard_sizes,weights,mean_losses,mean_loss,is_mean,is_std,fid_train,fid_test";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += fmt(v[i]);
  }
  return out;
}

std::string metrics_row(const fl::RoundRecord& r, const eval::EvalReport* ev) {
  using eval::format_double;
  std::ostringstream os;
  os << r.round << ',' << join(r.participants, [](int v) { return std::to_string(v); }) << ','
     << join(r.shard_sizes, [](std::size_t v) { return std::to_string(v); }) << ','
     << join(r.weights, [](double v) { return format_double(v); }) << ','
     << join(r.mean_losses, [](double v) { return format_double(v); }) << ','
     << format_double(r.mean_loss());
  if (ev) {
    os << ',' << format_double(ev->is_mean) << ',' << format_double(ev->is_std) << ','
       << format_double(ev->fid_train) << ',' << format_double(ev->fid_test);
  } else {
    os << ",,,,";
  }
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Keeps the header and the rows whose leading round field is <= round.
void truncate_csv(const fs::path& path, int round) {
  if (!fs::exists(path)) return;
  std::istringstream is(read_text(path));
  std::string out;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (header) {
      out += line + '\n';
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoi(line.substr(0, line.find(','))) <= round) out += line + '\n';
  }
  write_text(path, out);
}

class Appender {
 public:
  Appender(const fs::path& path, const char* header, bool fresh) : path_(path) {
    if (fresh || !fs::exists(path)) write_text(path, std::string(header) + '\n');
  }
  void line(const std::string& text) {
    std::ofstream os(path_, std::ios::app | std::ios::binary);
    os << text << '\n';
    if (!os) throw std::runtime_error("failed writing " + path_.string());
  }

 private:
  fs::path path_;
};

struct RunContext {
  ExperimentConfig config;
  fs::path dir;
  bool verbose = true;
};

ordered_json base_manifest(const RunContext& ctx, const std::string& config_text, int attempts) {
  const ExperimentConfig& c = ctx.config;
  ordered_json m;
  m["run_id"] = c.run_id;
  m["status"] = "running";
  m["mode"] = mode_name(c.mode);
  m["config_file"] = kConfigFile;
  m["config_hash"] = "fnv1a64:" + hex64(fnv1a(config_text));
  m["seeds"] = {{"fl", c.fl.seed},
                {"partition", c.partition.seed},
                {"dataset", c.dataset.seed},
                {"backend", c.evaluation.backend_seed}};
  m["design"] = {
      {"aggregation_weights", "shard size over the round's participants"},
      {"optimizer_state", "fresh Adam state per client per round"},
      {"client_rng", "derived from (seed, client_id, round)"},
      {"centralized_schedule", "R blocks of E epochs, optimizer reset per block"},
      {"partition_guard",
       {{"min_samples_per_client", c.partition.min_samples_per_client},
        {"attempts_used", attempts}}},
      {"sampling_variance", std::string(diffusion::variance_choice_name(c.fl.variance))},
      {"eval_pixels", "generated values clipped to [-1, 1], no dequantization"},
  };
  m["simd_isa"] = std::string(simd::isa_name(simd::active_isa()));
  return m;
}

void write_manifest(const RunContext& ctx, ordered_json m, const std::string& status,
                    int round) {
  m["status"] = status;
  m["rounds_completed"] = round;
  ordered_json index = ordered_json::array();
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(ctx.dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), ctx.dir));
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    if (f == kManifestFile) continue;
    if (f.filename().string().find(".tmp") != std::string::npos) continue;
    index.push_back({{"path", f.generic_string()}, {"bytes", fs::file_size(ctx.dir / f)}});
  }
  index.push_back({{"path", kManifestFile}});
  m["artifacts"] = std::move(index);
  const fs::path tmp = ctx.dir / (std::string(kManifestFile) + ".tmp");
  write_text(tmp, m.dump(2) + "\n");
  fs::rename(tmp, ctx.dir / kManifestFile);
}

void prune_checkpoints(const fs::path& dir, int keep) {
  auto all = list_checkpoints(dir);
  while (all.size() > static_cast<std::size_t>(keep)) {
    fs::remove(all.front());
    all.erase(all.begin());
  }
}

RunOutcome execute(const RunContext& ctx, const std::optional<nn::Checkpoint>& resume,
                   int stop_after_round) {
  const ExperimentConfig& c = ctx.config;
  const std::string config_text = emit_config(c);
  const Datasets data = load_datasets(c.dataset);
  if (c.denoiser.class_conditional && c.denoiser.num_classes != data.train.num_classes()) {
    throw ConfigError("denoiser.num_classes: dataset has " +
                      std::to_string(data.train.num_classes()) + " classes");
  }
  int attempts = 0;
  const std::vector<data::ClientShard> shards = make_shards(c, data.train, &attempts);
  data::write_partition_csv(ctx.dir / kPartitionFile, shards, data.train.num_classes());

  const eval::DeskBackend backend(data.train, {.seed = c.evaluation.backend_seed});
  const eval::ReferenceStats refs = eval::reference_stats(backend, data.train, data.test);
  const std::size_t n_eval =
      c.evaluation.sample_count ? c.evaluation.sample_count : data.test.size();

  ordered_json manifest = base_manifest(ctx, config_text, attempts);
  manifest["backend_id"] = backend.id();
  if (resume) manifest["resumed_from_round"] = resume->round;
  write_manifest(ctx, manifest, "running", resume ? static_cast<int>(resume->round) : 0);

  nn::Denoiser denoiser(c.denoiser);
  fl::ServerState state = fl::initial_state(denoiser, c.fl);
  if (resume) {
    state.global = resume->params;
    state.round = static_cast<int>(resume->round);
  }

  const bool fresh = !resume.has_value();
  Appender metrics(ctx.dir / kMetricsFile, kMetricsHeader, fresh);
  Appender timings(ctx.dir / kTimingsFile, "round,wall_seconds", fresh);
  Appender evals(ctx.dir / kEvalCsvFile, eval::kEvalCsvHeader, fresh);
  std::optional<eval::EvalReport> pending;
  std::optional<eval::EvalReport> last_report;
  int last_checkpoint = resume ? static_cast<int>(resume->round) : -1;

  auto save_checkpoint = [&](int round, const nn::ParameterVector& params) {
    fs::create_directories(ctx.dir / kCheckpointDir);
    nn::write_checkpoint(ctx.dir / kCheckpointDir / checkpoint_name(round),
                         {c.denoiser, params, round});
    prune_checkpoints(ctx.dir, c.artifacts.keep_checkpoints);
    last_checkpoint = round;
  };

  fl::RunHooks hooks;
  hooks.evaluate = [&](int round, const nn::ParameterVector& global) {
    Rng rng(derive_seed(c.fl.seed, {stream::kEvaluation, static_cast<std::uint64_t>(round)}));
    const ImageBatch samples = generate_samples(denoiser, global, c.fl, n_eval, rng);
    eval::EvalReport r = eval::evaluate_samples(samples, refs, backend, c.evaluation.is_splits);
    r.round = round;
    evals.line(eval::eval_csv_row(r));
    pending = r;
    last_report = r;
    save_checkpoint(round, global);
  };
  hooks.on_round = [&](const fl::ServerState&, const fl::RoundRecord& rec) {
    metrics.line(metrics_row(rec, pending ? &*pending : nullptr));
    timings.line(std::to_string(rec.round) + ',' + eval::format_double(rec.wall_seconds));
    if (ctx.verbose) {
      std::cerr << "round " << rec.round << "/" << c.fl.rounds << " loss "
                << rec.mean_loss();
      if (pending) std::cerr << " fid_train " << pending->fid_train << " is " << pending->is_mean;
      std::cerr << " (" << rec.wall_seconds << " s)\n";
    }
    pending.reset();
  };
  hooks.should_stop = [&](int round) { return stop_after_round > 0 && round >= stop_after_round; };

  if (c.mode == Mode::kCentralized) {
    state = fl::run_centralized(denoiser, data.train, c.fl, std::move(state), hooks);
  } else {
    state = fl::run_fl(denoiser, data.train, shards, c.fl, std::move(state), hooks);
  }

  RunOutcome out{ctx.dir, state.round, state.round >= c.fl.rounds};
  if (!out.completed) {
    if (last_checkpoint != state.round) save_checkpoint(state.round, state.global);
    write_manifest(ctx, manifest, "interrupted", state.round);
    return out;
  }

  // Final artifacts.
  Rng grid_rng(derive_seed(c.fl.seed, {stream::kEvaluation, 0}));
  const auto grid_n = static_cast<std::size_t>(c.artifacts.grid_samples);
  const ImageBatch grid = generate_samples(denoiser, state.global, c.fl, grid_n, grid_rng);
  ImageBatch shown = grid;
  eval::clip_to_data_range(shown);
  emit_sample_grid(shown, static_cast<std::size_t>(c.artifacts.grid_per_row),
                   ctx.dir / kSamplesFile);

  std::vector<NamedClusters> groups;
  groups.push_back({"global", color_cluster_summary(shown, c.evaluation.color_clusters, c.fl.seed)});
  if (c.evaluation.personalized_clusters) {
    // Post-round personalized models: one local update from the final global model.
    const auto sched = c.fl.schedule();
    for (const auto& shard : shards) {
      const auto id = static_cast<std::uint64_t>(shard.client_id);
      Rng train_rng(derive_seed(c.fl.seed, {stream::kPersonalized, id, 0}));
      const fl::LocalResult local =
          fl::local_update(denoiser, data.train, shard, state.global, c.fl, sched, train_rng);
      Rng gen_rng(derive_seed(c.fl.seed, {stream::kPersonalized, id, 1}));
      ImageBatch s = generate_samples(denoiser, local.params, c.fl, grid_n, gen_rng);
      eval::clip_to_data_range(s);
      groups.push_back({"client_" + std::to_string(shard.client_id),
                        color_cluster_summary(s, c.evaluation.color_clusters, c.fl.seed)});
    }
  }
  write_color_clusters_csv(ctx.dir / kClustersFile, groups);

  // Baseline: uniform noise images scored against the same references.
  Rng noise_rng(derive_seed(c.fl.seed, {stream::kEvaluation, 0, 1}));
  ImageBatch noise(Shape4{n_eval, data.train.channels(), data.train.height(), data.train.width()});
  for (double& v : noise.values()) v = 2.0 * noise_rng.uniform() - 1.0;
  const eval::EvalReport noise_report =
      eval::evaluate_samples(noise, refs, backend, c.evaluation.is_splits);

  if (!last_report) {
    // Resumed exactly at the final round: recover the stored row.
    const auto stored = eval::read_eval_csv(ctx.dir / kEvalCsvFile);
    if (stored.empty()) throw std::runtime_error("no evaluation rows found");
    last_report = stored.back();
  }
  ordered_json report = ordered_json::parse(eval::eval_report_json(*last_report));
  report["baselines"] = {{"uniform_noise_fid_train", noise_report.fid_train},
                         {"uniform_noise_fid_test", noise_report.fid_test},
                         {"uniform_noise_is_mean", noise_report.is_mean}};
  if (!state.history.empty()) {
    report["final_round_mean_loss"] = state.history.back().mean_loss();
  }
  report["classifier_test_accuracy"] = backend.accuracy(data.test);
  write_text(ctx.dir / kEvalJsonFile, report.dump(2) + "\n");
  write_manifest(ctx, manifest, "completed", state.round);
  return out;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  RunContext ctx{config, resolve_output_root(options.output_root, config) / config.run_id,
                 options.verbose};
  if (fs::exists(ctx.dir)) {
    throw ConfigError("run_id: run directory already exists: " + ctx.dir.string());
  }
  fs::create_directories(ctx.dir);
  write_text(ctx.dir / kConfigFile, emit_config(config));
  return execute(ctx, std::nullopt, options.stop_after_round);
}

RunOutcome resume_experiment(const std::string& run_id, const RunOptions& options) {
  const fs::path dir = resolve_output_root(options.output_root) / run_id;
  if (!fs::exists(dir / kConfigFile)) {
    throw ConfigError("run_id: no run found at " + dir.string());
  }
  RunContext ctx{load_config(dir / kConfigFile), dir, options.verbose};
  const auto ckpts = list_checkpoints(dir);
  std::optional<nn::Checkpoint> resume;
  if (!ckpts.empty()) {
    resume = nn::read_checkpoint(ckpts.back());
    if (!(resume->config == ctx.config.denoiser)) {
      throw std::runtime_error("checkpoint architecture does not match the run config");
    }
  }
  const int round = resume ? static_cast<int>(resume->round) : 0;
  for (const char* f : {kMetricsFile, kTimingsFile, kEvalCsvFile}) truncate_csv(dir / f, round);
  return execute(ctx, resume, options.stop_after_round);
}

}  // namespace feddiff::experiment
