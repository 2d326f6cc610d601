#include "feddiff/fl/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "feddiff/nn/adam.hpp"
#include "feddiff/parallel.hpp"
#include "feddiff/simd/kernels.hpp"

namespace feddiff::fl {

void FLConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("fl." + msg); };
  if (rounds < 1) fail("rounds: must be >= 1");
  if (local_epochs < 0) fail("local_epochs: must be >= 0");
  if (num_clients < 1) fail("num_clients: must be >= 1");
  if (participants_per_round < 1 || participants_per_round > num_clients) {
    fail("participants_per_round: must be in [1, num_clients]");
  }
  if (batch_size < 1) fail("batch_size: must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate: must be > 0");
  if (timesteps < 1) fail("timesteps: must be >= 1");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    fail("beta_start/beta_end: need 0 < beta_start <= beta_end < 1");
  }
  if (eval_every < 1) fail("eval_every: must be >= 1");
  if (!(hflip_probability >= 0.0 && hflip_probability <= 1.0)) {
    fail("hflip_probability: must be in [0, 1]");
  }
  if (client_workers < 1) fail("client_workers: must be >= 1");
}

diffusion::NoiseSchedule FLConfig::schedule() const {
  return diffusion::build_linear_schedule(timesteps, beta_start, beta_end);
}

double RoundRecord::mean_loss() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < mean_losses.size(); ++i) acc += weights.at(i) * mean_losses[i];
  return acc;
}

namespace {

double train_epochs(const nn::Denoiser& denoiser, const data::LabeledDataset& dataset,
                    const data::ClientShard& shard, nn::ParameterVector& params,
                    const FLConfig& config, const diffusion::NoiseSchedule& sched, Rng& rng,
                    nn::OptimizerState& opt, std::size_t& steps) {
  const bool conditional = denoiser.config().class_conditional;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order = shard.indices;
  double loss_sum = 0.0;
  std::size_t seen = 0;
  for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      ImageBatch x0 = dataset.gather(idx);
      if (config.hflip_probability > 0.0) x0 = data::augment_hflip(x0, rng, config.hflip_probability);
      std::vector<int> labels;
      if (conditional) labels = dataset.gather_labels(idx);
      const nn::GradientResult g = denoiser.loss_gradient(params, x0, sched, rng, labels);
      nn::adam_step(params.values, g.gradient, opt);
      loss_sum += g.loss * static_cast<double>(idx.size());
      seen += idx.size();
      ++steps;
    }
  }
  return seen == 0 ? std::numeric_limits<double>::quiet_NaN()
                   : loss_sum / static_cast<double>(seen);
}

RoundRecord make_record(int round, std::vector<int> ids, std::vector<std::size_t> sizes,
                        std::vector<double> losses, double seconds) {
  RoundRecord rec;
  rec.round = round;
  rec.participants = std::move(ids);
  rec.weights = aggregation_weights(sizes);
  rec.shard_sizes = std::move(sizes);
  rec.mean_losses = std::move(losses);
  rec.wall_seconds = seconds;
  return rec;
}

bool is_eval_round(const FLConfig& config, int round) {
  return round % config.eval_every == 0 || round == config.rounds;
}

void finish_round(const FLConfig& config, ServerState& state, RoundRecord rec,
                  const RunHooks& hooks) {
  state.round = rec.round;
  state.history.push_back(std::move(rec));
  if (hooks.evaluate && is_eval_round(config, state.round)) hooks.evaluate(state.round, state.global);
  if (hooks.on_round) hooks.on_round(state, state.history.back());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::uint64_t client_stream_seed(std::uint64_t seed, int client_id, int round) {
  return derive_seed(seed, {stream::kClient, static_cast<std::uint64_t>(client_id),
                            static_cast<std::uint64_t>(round)});
}

LocalResult local_update(const nn::Denoiser& denoiser, const data::LabeledDataset& dataset,
                         const data::ClientShard& shard, const nn::ParameterVector& global,
                         const FLConfig& config, const diffusion::NoiseSchedule& sched, Rng& rng) {
  if (shard.indices.empty()) {
    throw std::invalid_argument("local_update: client " + std::to_string(shard.client_id) +
                                " has an empty shard");
  }
  denoiser.check_layout(global);
  for (std::size_t i : shard.indices) {
    if (i >= dataset.size()) throw std::out_of_range("local_update: shard index out of range");
  }
  LocalResult out;
  out.params = global;
  nn::OptimizerState opt =
      nn::OptimizerState::fresh(global.values.size(), static_cast<float>(config.learning_rate));
  out.mean_loss = train_epochs(denoiser, dataset, shard, out.params, config, sched, rng, opt,
                               out.steps);
  return out;
}

std::vector<double> aggregation_weights(std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw std::invalid_argument("aggregate: no clients");
  double total = 0.0;
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument("aggregate: client size must be positive");
    total += static_cast<double>(s);
  }
  std::vector<double> w(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) w[i] = static_cast<double>(sizes[i]) / total;
  return w;
}

nn::ParameterVector aggregate(std::span<const nn::ParameterVector> params,
                              std::span<const std::size_t> sizes) {
  if (params.empty()) throw std::invalid_argument("aggregate: no clients");
  if (params.size() != sizes.size()) {
    throw std::invalid_argument("aggregate: params and sizes differ in length");
  }
  for (const auto& p : params) {
    p.validate();
    if (!p.same_layout(params.front()) || p.values.size() != params.front().values.size()) {
      throw std::invalid_argument("aggregate: parameter manifests differ");
    }
  }
  const std::vector<double> w = aggregation_weights(sizes);
  std::vector<double> acc(params.front().values.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    simd::accumulate_scaled(w[i], params[i].values, acc);
  }
  nn::ParameterVector out;
  out.manifest = params.front().manifest;
  out.values.resize(acc.size());
  std::transform(acc.begin(), acc.end(), out.values.begin(),
                 [](double v) { return static_cast<float>(v); });
  return out;
}

std::vector<int> sample_participants(int num_clients, int participants, int round,
                                     std::uint64_t seed) {
  if (num_clients < 1) throw std::invalid_argument("sample_participants: N must be >= 1");
  if (participants < 1 || participants > num_clients) {
    throw std::invalid_argument("sample_participants: need 1 <= M <= N");
  }
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 1);
  if (participants == num_clients) return ids;
  Rng rng(derive_seed(seed, {stream::kParticipants, static_cast<std::uint64_t>(round)}));
  // Partial Fisher-Yates: the first M slots become a uniform M-subset.
  for (int i = 0; i < participants; ++i) {
    const int j = rng.uniform_int(i, num_clients - 1);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(participants));
  std::sort(ids.begin(), ids.end());
  return ids;
}

ServerState initial_state(const nn::Denoiser& denoiser, const FLConfig& config) {
  ServerState s;
  s.global = denoiser.init(config.seed);
  return s;
}

ServerState run_fl(const nn::Denoiser& denoiser, const data::LabeledDataset& dataset,
                   std::span<const data::ClientShard> shards, const FLConfig& config,
                   ServerState state, const RunHooks& hooks) {
  config.validate();
  if (shards.size() != static_cast<std::size_t>(config.num_clients)) {
    throw std::invalid_argument("run_fl: expected " + std::to_string(config.num_clients) +
                                " shards, got " + std::to_string(shards.size()));
  }
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (shards[i].client_id != static_cast<int>(i) + 1) {
      throw std::invalid_argument("run_fl: shards must be ordered by client id 1..N");
    }
  }
  denoiser.check_layout(state.global);
  if (state.round < 0 || state.round > config.rounds) {
    throw std::invalid_argument("run_fl: initial round outside [0, R]");
  }
  const diffusion::NoiseSchedule sched = config.schedule();

  for (int r = state.round + 1; r <= config.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> ids =
        sample_participants(config.num_clients, config.participants_per_round, r, config.seed);
    const nn::ParameterVector& broadcast = state.global;
    std::vector<LocalResult> results(ids.size());
    std::vector<std::exception_ptr> errors(ids.size());
    parallel_for(ids.size(), config.client_workers, [&](std::size_t k) {
      try {
        const data::ClientShard& shard = shards[static_cast<std::size_t>(ids[k] - 1)];
        Rng rng(client_stream_seed(config.seed, ids[k], r));
        results[k] = local_update(denoiser, dataset, shard, broadcast, config, sched, rng);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!errors[k]) continue;
      std::string what = "unknown error";
      try {
        std::rethrow_exception(errors[k]);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      throw std::runtime_error("round " + std::to_string(r) + ": client " +
                               std::to_string(ids[k]) + " failed: " + what);
    }

    std::vector<nn::ParameterVector> locals;
    std::vector<std::size_t> sizes;
    std::vector<double> losses;
    locals.reserve(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
      locals.push_back(std::move(results[k].params));
      sizes.push_back(shards[static_cast<std::size_t>(ids[k] - 1)].size());
      losses.push_back(results[k].mean_loss);
    }
    state.global = aggregate(locals, sizes);
    RoundRecord rec = make_record(r, ids, std::move(sizes), std::move(losses), seconds_since(t0));
    finish_round(config, state, std::move(rec), hooks);
    if (hooks.should_stop && hooks.should_stop(r)) break;
  }
  return state;
}

data::ClientShard whole_dataset_shard(const data::LabeledDataset& dataset) {
  data::ClientShard shard;
  shard.client_id = 1;
  shard.indices.resize(dataset.size());
  std::iota(shard.indices.begin(), shard.indices.end(), std::size_t{0});
  shard.label_histogram = dataset.class_histogram();
  return shard;
}

ServerState run_centralized(const nn::Denoiser& denoiser, const data::LabeledDataset& dataset,
                            const FLConfig& config, ServerState state, const RunHooks& hooks,
                            bool continuous_optimizer) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("run_centralized: empty dataset");
  denoiser.check_layout(state.global);
  const diffusion::NoiseSchedule sched = config.schedule();
  const data::ClientShard shard = whole_dataset_shard(dataset);
  nn::OptimizerState opt = nn::OptimizerState::fresh(state.global.values.size(),
                                                     static_cast<float>(config.learning_rate));
  for (int r = state.round + 1; r <= config.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(client_stream_seed(config.seed, 1, r));
    if (!continuous_optimizer) {
      opt = nn::OptimizerState::fresh(state.global.values.size(),
                                      static_cast<float>(config.learning_rate));
    }
    std::size_t steps = 0;
    const double loss =
        train_epochs(denoiser, dataset, shard, state.global, config, sched, rng, opt, steps);
    RoundRecord rec = make_record(r, {1}, {shard.size()}, {loss}, seconds_since(t0));
    finish_round(config, state, std::move(rec), hooks);
    if (hooks.should_stop && hooks.should_stop(r)) break;
  }
  return state;
}

}  // namespace feddiff::fl
