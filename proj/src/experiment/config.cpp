#include "feddiff/experiment/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace feddiff::experiment {

namespace {

// Reads typed fields out of one YAML map and rejects keys nobody asked for.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where("") + "expected a mapping");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    if (v.IsNull()) throw ConfigError(where(key) + "missing value");
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(where(key) + "invalid value '" + scalar_text(v) + "'");
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    YAML::Node sub;
    if (node_ && node_.IsMap()) sub = node_[key];
    return Section(sub, where_path(key));
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(where(key) + "unknown key");
    }
  }

  std::string where(const std::string& key) const { return where_path(key) + ": "; }

 private:
  std::string where_path(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }
  static std::string scalar_text(const YAML::Node& v) {
    if (v.IsScalar()) return v.Scalar();
    std::ostringstream os;
    os << v;
    return os.str();
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
void checked(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::string mode_name(Mode m) { return m == Mode::kCentralized ? "centralized" : "federated"; }

void ExperimentConfig::validate() const {
  if (run_id.empty()) throw ConfigError("run_id: required");
  if (run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..") {
    throw ConfigError("run_id: must be a plain directory name");
  }
  const auto& d = dataset;
  static const std::set<std::string> kNames{"synthetic", "cifar10", "fashion_mnist", "image_folder"};
  if (!kNames.count(d.name)) {
    throw ConfigError("dataset.name: expected synthetic, cifar10, fashion_mnist or image_folder");
  }
  if (d.name != "synthetic" && d.path.empty()) throw ConfigError("dataset.path: required for " + d.name);
  if (d.image_size < 1) throw ConfigError("dataset.image_size: must be >= 1");
  if (d.channels != 1 && d.channels != 3) throw ConfigError("dataset.channels: must be 1 or 3");
  if (d.name == "synthetic") {
    if (d.train_samples < 2) throw ConfigError("dataset.train_samples: must be >= 2");
    if (d.test_samples < 2) throw ConfigError("dataset.test_samples: must be >= 2");
    if (d.num_classes < 1 || d.num_classes > 10) throw ConfigError("dataset.num_classes: must be in [1, 10]");
  }
  if (d.name == "cifar10" && d.channels != 3) throw ConfigError("dataset.channels: cifar10 is RGB (3)");
  if (d.name == "fashion_mnist" && d.channels != 1) {
    throw ConfigError("dataset.channels: fashion_mnist is grayscale (1)");
  }
  checked([&] { partition.validate(); });
  checked([&] { fl.validate(); });
  checked([&] { denoiser.validate(); });
  if (denoiser.in_channels != d.channels) {
    throw ConfigError("denoiser.in_channels: must equal dataset.channels");
  }
  if (denoiser.image_size != d.image_size) {
    throw ConfigError("denoiser.image_size: must equal dataset.image_size");
  }
  if (partition.num_clients != fl.num_clients) {
    throw ConfigError("fl.num_clients: must equal partition.num_clients");
  }
  if (mode == Mode::kCentralized && (fl.num_clients != 1 || fl.participants_per_round != 1)) {
    throw ConfigError("fl.num_clients: centralized mode uses a single client");
  }
  if (fl.local_epochs < 1) throw ConfigError("fl.local_epochs: must be >= 1");
  if (evaluation.backend != "desk") throw ConfigError("evaluation.backend: only 'desk' is available");
  if (evaluation.sample_count == 1) throw ConfigError("evaluation.sample_count: must be 0 or >= 2");
  if (evaluation.is_splits < 1) throw ConfigError("evaluation.is_splits: must be >= 1");
  if (evaluation.color_clusters < 1) throw ConfigError("evaluation.color_clusters: must be >= 1");
  if (artifacts.keep_checkpoints < 1) throw ConfigError("artifacts.keep_checkpoints: must be >= 1");
  if (artifacts.grid_samples < 1) throw ConfigError("artifacts.grid_samples: must be >= 1");
  if (artifacts.grid_per_row < 1) throw ConfigError("artifacts.grid_per_row: must be >= 1");
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("<root>: YAML syntax error: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("<root>: expected a mapping");
  ExperimentConfig c;
  Section top(root, "");
  top.get("run_id", c.run_id);
  std::string mode = mode_name(c.mode);
  top.get("mode", mode);
  if (mode == "centralized") {
    c.mode = Mode::kCentralized;
  } else if (mode == "federated") {
    c.mode = Mode::kFederated;
  } else {
    throw ConfigError("mode: expected centralized or federated");
  }
  top.get("output_root", c.output_root);

  Section ds = top.child("dataset");
  ds.get("name", c.dataset.name);
  ds.get("path", c.dataset.path);
  ds.get("image_size", c.dataset.image_size);
  ds.get("channels", c.dataset.channels);
  ds.get("train_samples", c.dataset.train_samples);
  ds.get("test_samples", c.dataset.test_samples);
  ds.get("num_classes", c.dataset.num_classes);
  ds.get("seed", c.dataset.seed);
  ds.finish();

  // Architecture follows the data unless overridden.
  c.denoiser.in_channels = c.dataset.channels;
  c.denoiser.image_size = c.dataset.image_size;

  Section fl = top.child("fl");
  fl.get("rounds", c.fl.rounds);
  fl.get("local_epochs", c.fl.local_epochs);
  fl.get("num_clients", c.fl.num_clients);
  c.fl.participants_per_round = c.fl.num_clients;
  fl.get("participants_per_round", c.fl.participants_per_round);
  fl.get("batch_size", c.fl.batch_size);
  fl.get("learning_rate", c.fl.learning_rate);
  fl.get("timesteps", c.fl.timesteps);
  fl.get("beta_start", c.fl.beta_start);
  fl.get("beta_end", c.fl.beta_end);
  fl.get("seed", c.fl.seed);
  std::string variance(diffusion::variance_choice_name(c.fl.variance));
  fl.get("variance", variance);
  try {
    c.fl.variance = diffusion::parse_variance_choice(variance);
  } catch (const std::invalid_argument&) {
    throw ConfigError("fl.variance: expected beta, beta_tilde or beta_tilde_unscaled");
  }
  fl.get("eval_every", c.fl.eval_every);
  fl.get("hflip_probability", c.fl.hflip_probability);
  fl.get("client_workers", c.fl.client_workers);
  fl.finish();

  c.partition.num_clients = c.fl.num_clients;
  c.partition.seed = c.fl.seed;
  Section part = top.child("partition");
  part.get("concentration", c.partition.concentration);
  part.get("seed", c.partition.seed);
  part.get("min_samples_per_client", c.partition.min_samples_per_client);
  part.get("max_attempts", c.partition.max_attempts);
  part.finish();

  Section den = top.child("denoiser");
  den.get("in_channels", c.denoiser.in_channels);
  den.get("image_size", c.denoiser.image_size);
  den.get("base_channels", c.denoiser.base_channels);
  den.get("channel_multipliers", c.denoiser.channel_multipliers);
  den.get("res_blocks_per_stage", c.denoiser.res_blocks_per_stage);
  den.get("time_embed_dim", c.denoiser.time_embed_dim);
  den.get("class_conditional", c.denoiser.class_conditional);
  den.get("num_classes", c.denoiser.num_classes);
  den.finish();
  if (c.denoiser.class_conditional && c.denoiser.num_classes == 0) {
    if (c.dataset.name == "synthetic") c.denoiser.num_classes = c.dataset.num_classes;
    if (c.dataset.name == "cifar10" || c.dataset.name == "fashion_mnist") c.denoiser.num_classes = 10;
  }

  Section ev = top.child("evaluation");
  ev.get("backend", c.evaluation.backend);
  ev.get("sample_count", c.evaluation.sample_count);
  ev.get("backend_seed", c.evaluation.backend_seed);
  ev.get("is_splits", c.evaluation.is_splits);
  ev.get("color_clusters", c.evaluation.color_clusters);
  ev.get("personalized_clusters", c.evaluation.personalized_clusters);
  ev.finish();

  Section art = top.child("artifacts");
  art.get("keep_checkpoints", c.artifacts.keep_checkpoints);
  art.get("grid_samples", c.artifacts.grid_samples);
  art.get("grid_per_row", c.artifacts.grid_per_row);
  art.finish();

  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("<file>: cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const ExperimentConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "run_id" << YAML::Value << c.run_id;
  out << YAML::Key << "mode" << YAML::Value << mode_name(c.mode);
  if (!c.output_root.empty()) out << YAML::Key << "output_root" << YAML::Value << c.output_root;

  out << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << c.dataset.name;
  out << YAML::Key << "path" << YAML::Value << c.dataset.path;
  out << YAML::Key << "image_size" << YAML::Value << c.dataset.image_size;
  out << YAML::Key << "channels" << YAML::Value << c.dataset.channels;
  out << YAML::Key << "train_samples" << YAML::Value << c.dataset.train_samples;
  out << YAML::Key << "test_samples" << YAML::Value << c.dataset.test_samples;
  out << YAML::Key << "num_classes" << YAML::Value << c.dataset.num_classes;
  out << YAML::Key << "seed" << YAML::Value << c.dataset.seed;
  out << YAML::EndMap;

  out << YAML::Key << "fl" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rounds" << YAML::Value << c.fl.rounds;
  out << YAML::Key << "local_epochs" << YAML::Value << c.fl.local_epochs;
  out << YAML::Key << "num_clients" << YAML::Value << c.fl.num_clients;
  out << YAML::Key << "participants_per_round" << YAML::Value << c.fl.participants_per_round;
  out << YAML::Key << "batch_size" << YAML::Value << c.fl.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << c.fl.learning_rate;
  out << YAML::Key << "timesteps" << YAML::Value << c.fl.timesteps;
  out << YAML::Key << "beta_start" << YAML::Value << c.fl.beta_start;
  out << YAML::Key << "beta_end" << YAML::Value << c.fl.beta_end;
  out << YAML::Key << "seed" << YAML::Value << c.fl.seed;
  out << YAML::Key << "variance" << YAML::Value
      << std::string(diffusion::variance_choice_name(c.fl.variance));
  out << YAML::Key << "eval_every" << YAML::Value << c.fl.eval_every;
  out << YAML::Key << "hflip_probability" << YAML::Value << c.fl.hflip_probability;
  out << YAML::Key << "client_workers" << YAML::Value << c.fl.client_workers;
  out << YAML::EndMap;

  out << YAML::Key << "partition" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "concentration" << YAML::Value << c.partition.concentration;
  out << YAML::Key << "seed" << YAML::Value << c.partition.seed;
  out << YAML::Key << "min_samples_per_client" << YAML::Value << c.partition.min_samples_per_client;
  out << YAML::Key << "max_attempts" << YAML::Value << c.partition.max_attempts;
  out << YAML::EndMap;

  out << YAML::Key << "denoiser" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "in_channels" << YAML::Value << c.denoiser.in_channels;
  out << YAML::Key << "image_size" << YAML::Value << c.denoiser.image_size;
  out << YAML::Key << "base_channels" << YAML::Value << c.denoiser.base_channels;
  out << YAML::Key << "channel_multipliers" << YAML::Value << YAML::Flow
      << c.denoiser.channel_multipliers;
  out << YAML::Key << "res_blocks_per_stage" << YAML::Value << c.denoiser.res_blocks_per_stage;
  out << YAML::Key << "time_embed_dim" << YAML::Value << c.denoiser.time_embed_dim;
  out << YAML::Key << "class_conditional" << YAML::Value << c.denoiser.class_conditional;
  out << YAML::Key << "num_classes" << YAML::Value << c.denoiser.num_classes;
  out << YAML::EndMap;

  out << YAML::Key << "evaluation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "backend" << YAML::Value << c.evaluation.backend;
  out << YAML::Key << "sample_count" << YAML::Value << c.evaluation.sample_count;
  out << YAML::Key << "backend_seed" << YAML::Value << c.evaluation.backend_seed;
  out << YAML::Key << "is_splits" << YAML::Value << c.evaluation.is_splits;
  out << YAML::Key << "color_clusters" << YAML::Value << c.evaluation.color_clusters;
  out << YAML::Key << "personalized_clusters" << YAML::Value << c.evaluation.personalized_clusters;
  out << YAML::EndMap;

  out << YAML::Key << "artifacts" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "keep_checkpoints" << YAML::Value << c.artifacts.keep_checkpoints;
  out << YAML::Key << "grid_samples" << YAML::Value << c.artifacts.grid_samples;
  out << YAML::Key << "grid_per_row" << YAML::Value << c.artifacts.grid_per_row;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace feddiff::experiment
