#include "feddiff/data/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

namespace feddiff::data {

void PartitionSpec::validate() const {
  if (num_clients < 1) throw std::invalid_argument("partition.num_clients: must be >= 1");
  if (!(concentration > 0.0) || !std::isfinite(concentration)) {
    throw std::invalid_argument("partition.concentration: must be > 0");
  }
  if (max_attempts < 1) throw std::invalid_argument("partition.max_attempts: must be >= 1");
}

std::vector<std::size_t> largest_remainder(std::span<const double> proportions, std::size_t total) {
  const std::size_t n = proportions.size();
  std::vector<std::size_t> counts(n, 0);
  std::vector<double> remainders(n, 0.0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = proportions[i] * static_cast<double>(total);
    const double floor_v = std::floor(exact);
    counts[i] = static_cast<std::size_t>(floor_v);
    remainders[i] = exact - floor_v;
    assigned += counts[i];
  }
  // Proportions sum to 1 only up to rounding; never overshoot.
  while (assigned > total) {
    const auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t j = 0; assigned < total; j = (j + 1) % n) {
    ++counts[order[j]];
    ++assigned;
  }
  return counts;
}

PartitionResult dirichlet_partition(std::span<const int> labels, int num_classes,
                                    const PartitionSpec& spec) {
  spec.validate();
  if (labels.empty()) throw std::invalid_argument("dirichlet_partition: empty dataset");
  if (num_classes < 1) throw std::invalid_argument("dirichlet_partition: num_classes must be >= 1");
  const auto N = static_cast<std::size_t>(spec.num_clients);
  if (spec.min_samples_per_client * N > labels.size()) {
    throw std::invalid_argument("dirichlet_partition: min_samples_per_client * num_clients exceeds dataset size");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument("dirichlet_partition: label out of range");
    }
    by_class[labels[i]].push_back(i);
  }

  Rng rng(spec.seed);
  std::vector<double> proportions(N);
  for (int attempt = 1; attempt <= spec.max_attempts; ++attempt) {
    std::vector<std::vector<std::size_t>> assigned(N);
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      std::vector<std::size_t> idx = by_class[k];
      std::shuffle(idx.begin(), idx.end(), rng.engine());
      double sum = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        proportions[i] = rng.gamma(spec.concentration);
        sum += proportions[i];
      }
      if (sum > 0.0) {
        for (double& p : proportions) p /= sum;
      } else {
        // Every gamma draw underflowed (tiny concentration): all mass on one client.
        std::fill(proportions.begin(), proportions.end(), 0.0);
        proportions[static_cast<std::size_t>(rng.uniform_int(0, spec.num_clients - 1))] = 1.0;
      }
      const auto counts = largest_remainder(proportions, idx.size());
      std::size_t offset = 0;
      for (std::size_t i = 0; i < N; ++i) {
        assigned[i].insert(assigned[i].end(), idx.begin() + static_cast<std::ptrdiff_t>(offset),
                           idx.begin() + static_cast<std::ptrdiff_t>(offset + counts[i]));
        offset += counts[i];
      }
    }
    const bool ok = std::all_of(assigned.begin(), assigned.end(), [&](const auto& a) {
      return a.size() >= spec.min_samples_per_client;
    });
    if (!ok) continue;

    PartitionResult result;
    result.attempts = attempt;
    result.shards.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      ClientShard& shard = result.shards[i];
      shard.client_id = static_cast<int>(i) + 1;
      shard.indices = std::move(assigned[i]);
      std::sort(shard.indices.begin(), shard.indices.end());
      shard.label_histogram.assign(static_cast<std::size_t>(num_classes), 0);
      for (std::size_t idx : shard.indices) ++shard.label_histogram[labels[idx]];
    }
    return result;
  }
  throw std::runtime_error("dirichlet_partition: no draw met min_samples_per_client within " +
                           std::to_string(spec.max_attempts) + " attempts");
}

ImageBatch augment_hflip(const ImageBatch& batch, Rng& rng, double probability) {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw std::invalid_argument("augment_hflip: probability must be in [0, 1]");
  }
  ImageBatch out = batch;
  const Shape4& s = batch.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    if (!rng.bernoulli(probability)) continue;
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) out.at(n, c, y, x) = batch.at(n, c, y, s.w - 1 - x);
      }
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> partition_heatmap(std::span<const ClientShard> shards,
                                                        int num_classes) {
  std::vector<std::vector<std::size_t>> m;
  m.reserve(shards.size());
  for (const ClientShard& s : shards) {
    if (s.label_histogram.size() != static_cast<std::size_t>(num_classes)) {
      throw std::invalid_argument("partition_heatmap: shard histogram does not have K entries");
    }
    m.push_back(s.label_histogram);
  }
  return m;
}

double mean_normalized_label_entropy(std::span<const ClientShard> shards, int num_classes) {
  if (shards.empty() || num_classes < 2) return 0.0;
  const double log_k = std::log(static_cast<double>(num_classes));
  double total = 0.0;
  for (const ClientShard& s : shards) {
    const double n = static_cast<double>(s.size());
    double h = 0.0;
    if (n > 0) {
      for (std::size_t c : s.label_histogram) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
      }
    }
    total += h / log_k;
  }
  return total / static_cast<double>(shards.size());
}

void write_partition_csv(const std::filesystem::path& path, std::span<const ClientShard> shards,
                         int num_classes) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "client_id,class,count\n";
  for (const auto& row : shards) {
    for (int k = 0; k < num_classes; ++k) {
      os << row.client_id << ',' << k << ',' << row.label_histogram.at(k) << '\n';
    }
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace feddiff::data
