#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "feddiff/data/synthetic.hpp"
#include "feddiff/fl/orchestrator.hpp"
#include "feddiff/nn/adam.hpp"
#include "helpers.hpp"

using namespace feddiff;
using namespace feddiff::fl;

namespace {

nn::DenoiserConfig tiny_config() {
  nn::DenoiserConfig c;
  c.in_channels = 1;
  c.image_size = 4;
  c.base_channels = 4;
  c.channel_multipliers = {1};
  c.res_blocks_per_stage = 1;
  c.time_embed_dim = 8;
  return c;
}

data::LabeledDataset tiny_dataset(std::size_t n, std::uint64_t seed = 3) {
  data::SyntheticSpec s;
  s.num_samples = n;
  s.image_size = 4;
  s.num_classes = 2;
  s.seed = seed;
  return data::make_synthetic_shapes(s);
}

FLConfig tiny_fl() {
  FLConfig c;
  c.rounds = 2;
  c.local_epochs = 1;
  c.num_clients = 2;
  c.participants_per_round = 2;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  c.timesteps = 20;
  c.beta_end = 0.2;
  c.seed = 11;
  c.eval_every = 1;
  return c;
}

data::ClientShard shard_of(int id, std::vector<std::size_t> idx) {
  data::ClientShard s;
  s.client_id = id;
  s.indices = std::move(idx);
  return s;
}

nn::ParameterVector flat(std::vector<float> v) {
  nn::ParameterVector p;
  p.manifest = {nn::ManifestEntry{"w", {v.size()}}};
  p.values = std::move(v);
  return p;
}

std::vector<data::ClientShard> split_even(std::size_t n, int clients) {
  std::vector<data::ClientShard> out;
  for (int c = 0; c < clients; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = static_cast<std::size_t>(c); i < n; i += static_cast<std::size_t>(clients))
      idx.push_back(i);
    out.push_back(shard_of(c + 1, idx));
  }
  return out;
}

}  // namespace

TEST_SUITE("fl_orchestrator") {

TEST_CASE("config validation") {
  FLConfig c = tiny_fl();
  c.validate();
  c.participants_per_round = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_fl();
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = tiny_fl();
  c.local_epochs = 0;
  CHECK_NOTHROW(c.validate());
  FLConfig defaults;
  CHECK(defaults.centralized_epochs() == 1500);
}

TEST_CASE("local_update with zero epochs is the identity") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(8);
  const auto global = d.init(1);
  FLConfig c = tiny_fl();
  c.local_epochs = 0;
  Rng rng(5);
  const auto r = local_update(d, ds, shard_of(1, {0, 1, 2}), global, c, c.schedule(), rng);
  CHECK(r.params.values == global.values);
  CHECK(r.steps == 0);
  CHECK(std::isnan(r.mean_loss));
}

TEST_CASE("local_update is deterministic and leaves the broadcast untouched") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(16);
  const auto global = d.init(1);
  const auto snapshot = global.values;
  FLConfig c = tiny_fl();
  c.local_epochs = 2;
  Rng a(5), b(5);
  const auto ra = local_update(d, ds, shard_of(1, {0, 3, 4, 5, 9, 10, 11}), global, c, c.schedule(), a);
  const auto rb = local_update(d, ds, shard_of(1, {0, 3, 4, 5, 9, 10, 11}), global, c, c.schedule(), b);
  CHECK(ra.params.values == rb.params.values);
  CHECK(ra.mean_loss == rb.mean_loss);
  CHECK(global.values == snapshot);
  // 7 samples, batch 4, 2 epochs: partial batch included.
  CHECK(ra.steps == 4);
  CHECK(ra.params.values != global.values);
}

TEST_CASE("single step equals a manual loss_gradient + adam composition") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(8);
  const auto global = d.init(2);
  FLConfig c = tiny_fl();
  const auto sched = c.schedule();
  Rng rng(77);
  const auto r = local_update(d, ds, shard_of(1, {5}), global, c, sched, rng);
  REQUIRE(r.steps == 1);

  Rng manual(77);
  std::vector<std::size_t> order{5};
  std::shuffle(order.begin(), order.end(), manual.engine());
  const auto g = d.loss_gradient(global, ds.gather(order), sched, manual);
  nn::ParameterVector expect = global;
  auto opt = nn::OptimizerState::fresh(expect.values.size(), static_cast<float>(c.learning_rate));
  nn::adam_step(expect.values, g.gradient, opt);
  CHECK(r.params.values == expect.values);
  CHECK(r.mean_loss == g.loss);
}

TEST_CASE("local_update errors") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(8);
  const auto global = d.init(1);
  const FLConfig c = tiny_fl();
  Rng rng(1);
  CHECK_THROWS_AS(local_update(d, ds, shard_of(1, {}), global, c, c.schedule(), rng),
                  std::invalid_argument);
  auto wrong = global;
  wrong.values.pop_back();
  wrong.manifest.back().shape = {wrong.manifest.back().size() - 1};
  CHECK_THROWS(local_update(d, ds, shard_of(1, {0}), wrong, c, c.schedule(), rng));
}

TEST_CASE("aggregate examples") {
  const std::vector<nn::ParameterVector> one{flat({1.5f, -2.0f})};
  const std::vector<std::size_t> s1{7};
  CHECK(aggregate(one, s1).values == std::vector<float>{1.5f, -2.0f});

  const std::vector<nn::ParameterVector> two{flat({0.0f}), flat({4.0f})};
  const std::vector<std::size_t> s2{1, 3};
  CHECK(aggregate(two, s2).values == std::vector<float>{3.0f});

  const std::vector<nn::ParameterVector> empty;
  CHECK_THROWS(aggregate(empty, std::vector<std::size_t>{}));
  const std::vector<std::size_t> zero{0, 0};
  CHECK_THROWS(aggregate(two, zero));
  std::vector<nn::ParameterVector> mismatch{flat({0.0f}), flat({1.0f, 2.0f})};
  CHECK_THROWS(aggregate(mismatch, s2));
}

TEST_CASE("aggregate matches an independent weighted mean of ten random vectors") {
  Rng rng(99);
  std::vector<nn::ParameterVector> ps;
  std::vector<std::size_t> sizes;
  for (int i = 0; i < 10; ++i) {
    std::vector<float> v(257);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    ps.push_back(flat(v));
    sizes.push_back(static_cast<std::size_t>(rng.uniform_int(1, 1000)));
  }
  const auto agg = aggregate(ps, sizes);
  long double total = 0;
  for (auto s : sizes) total += s;
  for (std::size_t j = 0; j < 257; ++j) {
    long double acc = 0;
    for (int i = 9; i >= 0; --i) acc += static_cast<long double>(sizes[i]) * ps[i].values[j];
    const double expect = static_cast<double>(acc / total);
    CHECK(testutil::rel_err(agg.values[j], expect, 1e-6) <= 1e-6);
  }
}

TEST_CASE("aggregate properties: linearity, permutation, envelope") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = rng.uniform_int(1, 6);
    std::vector<nn::ParameterVector> ps, scaled;
    std::vector<std::size_t> sizes;
    const float c = static_cast<float>(rng.uniform() * 4 - 2);
    for (int i = 0; i < k; ++i) {
      std::vector<float> v(33);
      for (auto& x : v) x = static_cast<float>(rng.normal());
      std::vector<float> sv = v;
      for (auto& x : sv) x *= c;
      ps.push_back(flat(v));
      scaled.push_back(flat(sv));
      sizes.push_back(static_cast<std::size_t>(rng.uniform_int(1, 50)));
    }
    const auto a = aggregate(ps, sizes);
    const auto as = aggregate(scaled, sizes);
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    std::vector<nn::ParameterVector> pp;
    std::vector<std::size_t> psz;
    for (int i : perm) {
      pp.push_back(ps[i]);
      psz.push_back(sizes[i]);
    }
    const auto ap = aggregate(pp, psz);
    for (std::size_t j = 0; j < 33; ++j) {
      CHECK(std::abs(as.values[j] - c * a.values[j]) <= 1e-5f * (1 + std::abs(a.values[j])));
      CHECK(std::abs(ap.values[j] - a.values[j]) <= 1e-6f * (1 + std::abs(a.values[j])));
      float lo = ps[0].values[j], hi = lo;
      for (const auto& p : ps) {
        lo = std::min(lo, p.values[j]);
        hi = std::max(hi, p.values[j]);
      }
      CHECK(a.values[j] >= lo);
      CHECK(a.values[j] <= hi);
    }
  }
  const std::vector<std::size_t> sizes{3, 1, 6};
  const auto w = aggregation_weights(sizes);
  CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) <= 1e-12);
  CHECK(w[2] == doctest::Approx(0.6));
}

TEST_CASE("participant sampling") {
  const auto all = sample_participants(10, 10, 3, 1);
  CHECK(all == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(sample_participants(50, 10, 7, 42) == sample_participants(50, 10, 7, 42));
  CHECK(sample_participants(50, 10, 7, 42) != sample_participants(50, 10, 8, 42));
  CHECK_THROWS_AS(sample_participants(5, 6, 1, 0), std::invalid_argument);

  std::vector<int> freq(51, 0);
  const int rounds = 10000;
  for (int r = 1; r <= rounds; ++r) {
    const auto s = sample_participants(50, 10, r, 123);
    REQUIRE(s.size() == 10);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    for (int id : s) {
      REQUIRE(id >= 1);
      REQUIRE(id <= 50);
      ++freq[id];
    }
  }
  const double p = 0.2;
  const double se = std::sqrt(p * (1 - p) / rounds);
  for (int id = 1; id <= 50; ++id) {
    CAPTURE(id);
    CHECK(std::abs(freq[id] / static_cast<double>(rounds) - p) <= 3 * se + 1e-12);
  }
}

TEST_CASE("R=1 with identical data and seeds gives any single client's parameters") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(12);
  const auto global = d.init(3);
  const FLConfig c = tiny_fl();
  std::vector<nn::ParameterVector> locals;
  for (int id = 1; id <= 3; ++id) {
    Rng rng(1000);
    locals.push_back(local_update(d, ds, shard_of(id, {0, 1, 2, 3, 4, 5}), global, c, c.schedule(), rng).params);
  }
  const std::vector<std::size_t> sizes{6, 6, 6};
  const auto agg = aggregate(locals, sizes);
  for (std::size_t j = 0; j < agg.values.size(); ++j)
    CHECK(std::abs(agg.values[j] - locals[0].values[j]) <= 1e-7f * (1 + std::abs(locals[0].values[j])));
}

TEST_CASE("run_fl matches a scripted replay and is deterministic") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(20);
  FLConfig c = tiny_fl();
  const auto shards = split_even(ds.size(), 2);
  std::vector<int> eval_rounds;
  RunHooks hooks;
  hooks.evaluate = [&](int r, const nn::ParameterVector&) { eval_rounds.push_back(r); };
  const ServerState s = run_fl(d, ds, shards, c, initial_state(d, c), hooks);
  CHECK(s.round == 2);
  CHECK(eval_rounds == std::vector<int>{1, 2});
  REQUIRE(s.history.size() == 2);
  for (const auto& rec : s.history) {
    CHECK(rec.participants == std::vector<int>{1, 2});
    CHECK(std::abs(rec.weights[0] + rec.weights[1] - 1.0) <= 1e-9);
  }

  // Replay by hand.
  nn::ParameterVector g = d.init(c.seed);
  const auto sched = c.schedule();
  for (int r = 1; r <= 2; ++r) {
    std::vector<nn::ParameterVector> locals;
    std::vector<std::size_t> sizes;
    for (int id : sample_participants(2, 2, r, c.seed)) {
      Rng rng(client_stream_seed(c.seed, id, r));
      locals.push_back(local_update(d, ds, shards[id - 1], g, c, sched, rng).params);
      sizes.push_back(shards[id - 1].size());
    }
    g = aggregate(locals, sizes);
  }
  CHECK(s.global.values == g.values);

  const ServerState again = run_fl(d, ds, shards, c, initial_state(d, c));
  CHECK(again.global.values == s.global.values);
  c.client_workers = 2;
  const ServerState threaded = run_fl(d, ds, shards, c, initial_state(d, c));
  CHECK(threaded.global.values == s.global.values);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(threaded.history[i].mean_losses == s.history[i].mean_losses);
    CHECK(threaded.history[i].weights == s.history[i].weights);
  }
}

TEST_CASE("partial participation renormalizes weights") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(30);
  FLConfig c = tiny_fl();
  c.rounds = 3;
  c.num_clients = 5;
  c.participants_per_round = 2;
  c.local_epochs = 1;
  std::vector<data::ClientShard> shards = split_even(ds.size(), 5);
  shards[0].indices.resize(2);
  const ServerState s = run_fl(d, ds, shards, c, initial_state(d, c));
  for (const auto& rec : s.history) {
    CHECK(rec.participants.size() == 2);
    double sum = 0;
    for (double w : rec.weights) sum += w;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(rec.shard_sizes[k] == shards[rec.participants[k] - 1].size());
  }
}

TEST_CASE("single client federated run equals centralized training") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(10);
  FLConfig c = tiny_fl();
  c.num_clients = 1;
  c.participants_per_round = 1;
  c.rounds = 3;
  c.local_epochs = 2;
  const data::ClientShard whole = whole_dataset_shard(ds);
  CHECK(whole.client_id == 1);
  CHECK(whole.size() == ds.size());
  const std::vector<data::ClientShard> shards{whole};
  const ServerState fed = run_fl(d, ds, shards, c, initial_state(d, c));
  const ServerState cen = run_centralized(d, ds, c, initial_state(d, c));
  CHECK(fed.global.values == cen.global.values);
  REQUIRE(cen.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(fed.history[i].mean_losses == cen.history[i].mean_losses);

  // R=1, E=1: exactly one pass of ceil(10/4) batches.
  c.rounds = 1;
  c.local_epochs = 1;
  const ServerState one = run_centralized(d, ds, c, initial_state(d, c));
  Rng rng(client_stream_seed(c.seed, 1, 1));
  const auto lu = local_update(d, ds, whole, initial_state(d, c).global, c, c.schedule(), rng);
  CHECK(lu.steps == 3);
  CHECK(one.global.values == lu.params.values);
}

TEST_CASE("a failing client aborts the round with its id") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(10);
  FLConfig c = tiny_fl();
  c.rounds = 1;
  std::vector<data::ClientShard> shards = split_even(ds.size(), 2);
  shards[1].indices.push_back(500);
  CHECK_THROWS_WITH(run_fl(d, ds, shards, c, initial_state(d, c)),
                    doctest::Contains("client 2 failed"));
  shards.pop_back();
  CHECK_THROWS(run_fl(d, ds, shards, c, initial_state(d, c)));
}

TEST_CASE("should_stop ends the loop and a resumed state continues identically") {
  nn::Denoiser d(tiny_config());
  const auto ds = tiny_dataset(12);
  FLConfig c = tiny_fl();
  c.rounds = 4;
  const auto shards = split_even(ds.size(), 2);
  const ServerState full = run_fl(d, ds, shards, c, initial_state(d, c));
  RunHooks stop;
  stop.should_stop = [](int r) { return r == 2; };
  const ServerState half = run_fl(d, ds, shards, c, initial_state(d, c), stop);
  CHECK(half.round == 2);
  const ServerState rest = run_fl(d, ds, shards, c, half);
  CHECK(rest.round == 4);
  CHECK(rest.global.values == full.global.values);
}

}  // TEST_SUITE
