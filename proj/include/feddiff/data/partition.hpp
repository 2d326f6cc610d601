#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "feddiff/image_batch.hpp"
#include "feddiff/rng.hpp"

namespace feddiff::data {

struct PartitionSpec {
  int num_clients = 10;
  double concentration = 0.5;
  std::uint64_t seed = 0;
  std::size_t min_samples_per_client = 1;
  int max_attempts = 100;

  void validate() const;
};

struct ClientShard {
  int client_id = 0;  // 1-based
  std::vector<std::size_t> indices;  // ascending
  std::vector<std::size_t> label_histogram;

  std::size_t size() const { return indices.size(); }
};

struct PartitionResult {
  std::vector<ClientShard> shards;
  int attempts = 0;  // draws needed to satisfy the minimum-size guard
};

/// Label-skew split. Per attempt, for each class k in order: shuffle that
/// class's indices, draw client proportions from Dirichlet(concentration * 1_N)
/// as normalized Gamma draws, turn them into counts with largest-remainder
/// rounding (ties to the lower client), and hand out consecutive slices.
/// The whole allotment is redrawn while any client has fewer than
/// min_samples_per_client samples.
PartitionResult dirichlet_partition(std::span<const int> labels, int num_classes,
                                    const PartitionSpec& spec);

/// Integer counts summing to `total` that are closest to proportions * total.
std::vector<std::size_t> largest_remainder(std::span<const double> proportions, std::size_t total);

/// Flips each image along its width with the given probability. One uniform
/// draw per image regardless of the outcome.
ImageBatch augment_hflip(const ImageBatch& batch, Rng& rng, double probability = 0.5);

/// N x K matrix of per-client class counts.
std::vector<std::vector<std::size_t>> partition_heatmap(std::span<const ClientShard> shards,
                                                        int num_classes);

/// Mean over clients of the label entropy normalized by log(K).
double mean_normalized_label_entropy(std::span<const ClientShard> shards, int num_classes);

/// CSV rows "client_id,class,count" for every (client, class) pair.
void write_partition_csv(const std::filesystem::path& path, std::span<const ClientShard> shards,
                         int num_classes);

}  // namespace feddiff::data
