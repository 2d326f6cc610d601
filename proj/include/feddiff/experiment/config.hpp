#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "feddiff/data/dataset.hpp"
#include "feddiff/data/partition.hpp"
#include "feddiff/fl/orchestrator.hpp"
#include "feddiff/nn/config.hpp"

namespace feddiff::experiment {

/// Invalid or inconsistent configuration; the message starts with the field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { kCentralized, kFederated };

struct DatasetSpec {
  std::string name = "synthetic";  // synthetic | cifar10 | fashion_mnist | image_folder
  std::string path;                // data directory (train/ and test/ for image_folder)
  int image_size = 8;
  int channels = 1;
  // synthetic only
  std::size_t train_samples = 1024;
  std::size_t test_samples = 256;
  int num_classes = 2;
  std::uint64_t seed = 7;
};

struct EvalSpec {
  std::string backend = "desk";
  std::size_t sample_count = 0;  // 0: size of the test split
  std::uint64_t backend_seed = 1234;
  int is_splits = 10;
  int color_clusters = 5;
  bool personalized_clusters = false;
};

struct ArtifactSpec {
  int keep_checkpoints = 2;
  int grid_samples = 64;
  int grid_per_row = 8;
};

struct ExperimentConfig {
  std::string run_id;
  Mode mode = Mode::kFederated;
  std::string output_root;  // empty: FEDDIFF_OUTPUT_ROOT, then ./runs
  DatasetSpec dataset;
  data::PartitionSpec partition;
  fl::FLConfig fl;
  nn::DenoiserConfig denoiser;
  EvalSpec evaluation;
  ArtifactSpec artifacts;

  /// Throws ConfigError.
  void validate() const;
};

ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical YAML of every resolved field; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& config);

std::string mode_name(Mode m);

}  // namespace feddiff::experiment
