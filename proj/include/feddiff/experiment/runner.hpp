#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "feddiff/data/dataset.hpp"
#include "feddiff/data/partition.hpp"
#include "feddiff/experiment/config.hpp"
#include "feddiff/nn/denoiser.hpp"

namespace feddiff::experiment {

struct RunOptions {
  std::filesystem::path output_root;  // empty: see resolve_output_root
  int stop_after_round = 0;           // > 0 simulates an interruption after that round
  bool verbose = true;
};

struct RunOutcome {
  std::filesystem::path run_dir;
  int last_round = 0;
  bool completed = false;
};

/// Precedence: explicit argument, config.output_root, FEDDIFF_OUTPUT_ROOT, ./runs.
std::filesystem::path resolve_output_root(const std::filesystem::path& explicit_root,
                                          const ExperimentConfig& config);
std::filesystem::path resolve_output_root(const std::filesystem::path& explicit_root);

struct Datasets {
  data::LabeledDataset train;
  data::LabeledDataset test;
};
Datasets load_datasets(const DatasetSpec& spec);

/// Client shards for the configured mode (one shard in centralized mode).
std::vector<data::ClientShard> make_shards(const ExperimentConfig& config,
                                           const data::LabeledDataset& train, int* attempts = nullptr);

/// Ancestral samples from `params`. Class-conditional models get labels i % K.
ImageBatch generate_samples(const nn::Denoiser& denoiser, const nn::ParameterVector& params,
                            const fl::FLConfig& config, std::size_t n, Rng& rng);

/// Fresh run into <root>/<run_id>; fails if that directory already exists.
RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// Continues <root>/<run_id> from its latest checkpoint. Rows after the
/// checkpoint round are dropped from the CSVs before training resumes.
RunOutcome resume_experiment(const std::string& run_id, const RunOptions& options);

// File names inside a run directory.
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kConfigFile = "config.yaml";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kTimingsFile = "timings.csv";
inline constexpr const char* kPartitionFile = "partition.csv";
inline constexpr const char* kEvalCsvFile = "eval_report.csv";
inline constexpr const char* kEvalJsonFile = "eval_report.json";
inline constexpr const char* kSamplesFile = "samples.png";
inline constexpr const char* kClustersFile = "color_clusters.csv";
inline constexpr const char* kCheckpointDir = "checkpoints";

std::string checkpoint_name(int round);
/// Checkpoint files in ascending round order.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& run_dir);

}  // namespace feddiff::experiment
