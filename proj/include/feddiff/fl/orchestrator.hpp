#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "feddiff/data/dataset.hpp"
#include "feddiff/data/partition.hpp"
#include "feddiff/diffusion.hpp"
#include "feddiff/nn/denoiser.hpp"
#include "feddiff/nn/parameters.hpp"

namespace feddiff::fl {

struct FLConfig {
  int rounds = 300;
  int local_epochs = 5;
  int num_clients = 10;
  int participants_per_round = 10;
  int batch_size = 512;
  double learning_rate = 2e-4;
  int timesteps = 300;
  double beta_start = diffusion::kDefaultBetaStart;
  double beta_end = diffusion::kDefaultBetaEnd;
  std::uint64_t seed = 0;
  diffusion::VarianceChoice variance = diffusion::VarianceChoice::kBetaTilde;
  int eval_every = 10;
  double hflip_probability = 0.0;
  int client_workers = 1;  // clients trained concurrently within a round

  /// E = 0 is accepted for tests; it makes local_update the identity.
  void validate() const;
  diffusion::NoiseSchedule schedule() const;
  /// Epoch budget of the matching centralized run, R * E.
  int centralized_epochs() const { return rounds * local_epochs; }
};

struct RoundRecord {
  int round = 0;
  std::vector<int> participants;  // ascending client ids
  std::vector<std::size_t> shard_sizes;
  std::vector<double> mean_losses;
  std::vector<double> weights;
  double wall_seconds = 0.0;

  /// Aggregation-weighted mean of the participants' local losses.
  double mean_loss() const;
};

struct ServerState {
  nn::ParameterVector global;
  int round = 0;
  std::vector<RoundRecord> history;
};

struct LocalResult {
  nn::ParameterVector params;
  double mean_loss = 0.0;  // per-sample mean over all E epochs; NaN when E = 0
  std::size_t steps = 0;
};

/// One client's round: start from a copy of `global`, fresh Adam state, then
/// E epochs over the shard. Each epoch shuffles the shard with `rng`, and every
/// batch (the last one may be partial) gets optional flips, a loss_gradient
/// call and an Adam step.
LocalResult local_update(const nn::Denoiser& denoiser, const data::LabeledDataset& dataset,
                         const data::ClientShard& shard, const nn::ParameterVector& global,
                         const FLConfig& config, const diffusion::NoiseSchedule& sched, Rng& rng);

/// FedAvg weights |D_i| / sum |D_j| over the given set.
std::vector<double> aggregation_weights(std::span<const std::size_t> sizes);

/// Size-weighted elementwise mean, accumulated in double in list order.
nn::ParameterVector aggregate(std::span<const nn::ParameterVector> params,
                              std::span<const std::size_t> sizes);

/// Uniform M-of-N subset of {1..N}, ascending, determined by (seed, round).
std::vector<int> sample_participants(int num_clients, int participants, int round,
                                     std::uint64_t seed);

/// RNG stream of one client in one round.
std::uint64_t client_stream_seed(std::uint64_t seed, int client_id, int round);

struct RunHooks {
  /// Called after round r whenever r % eval_every == 0 or r == R.
  std::function<void(int round, const nn::ParameterVector& global)> evaluate;
  /// Called after every round, after `evaluate`.
  std::function<void(const ServerState& state, const RoundRecord& record)> on_round;
  /// Checked after on_round; returning true ends the run early.
  std::function<bool(int round)> should_stop;
};

/// FedAvg server loop. Starts from `initial` (round 0, or a resumed state)
/// and runs up to config.rounds. Results are independent of client_workers.
ServerState run_fl(const nn::Denoiser& denoiser, const data::LabeledDataset& dataset,
                   std::span<const data::ClientShard> shards, const FLConfig& config,
                   ServerState initial, const RunHooks& hooks = {});

/// Fresh server state with initial weights drawn from config.seed.
ServerState initial_state(const nn::Denoiser& denoiser, const FLConfig& config);

/// Centralized baseline over the whole dataset for R * E epochs, run as R
/// blocks of E epochs with the optimizer reset between blocks and the RNG
/// streams of client 1, so N = M = 1 federated training matches it exactly.
/// With continuous_optimizer the Adam state carries across blocks instead.
ServerState run_centralized(const nn::Denoiser& denoiser, const data::LabeledDataset& dataset,
                            const FLConfig& config, ServerState initial,
                            const RunHooks& hooks = {}, bool continuous_optimizer = false);

/// The single shard holding the whole dataset, client id 1.
data::ClientShard whole_dataset_shard(const data::LabeledDataset& dataset);

}  // namespace feddiff::fl
