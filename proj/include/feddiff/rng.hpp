#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace feddiff {

/// Seeded random source passed explicitly to every stochastic operation.
/// Draw order is part of each operation's contract, so replaying the same
/// sequence of calls on a fresh Rng reproduces results exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer on the closed range [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

/// Independent stream seed from a base seed and a tag tuple, e.g.
/// derive_seed(seed, {kClientStream, client_id, round}). The result does not
/// depend on scheduling, which keeps parallel clients reproducible.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

namespace stream {
inline constexpr std::uint64_t kClient = 0x636c69656e74ULL;
inline constexpr std::uint64_t kParticipants = 0x7061727469ULL;
inline constexpr std::uint64_t kEvaluation = 0x6576616cULL;
inline constexpr std::uint64_t kPersonalized = 0x706572736fULL;
}  // namespace stream

}  // namespace feddiff
