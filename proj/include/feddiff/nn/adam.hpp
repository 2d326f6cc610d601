#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace feddiff::nn {

struct OptimizerState {
  std::vector<float> first_moment;
  std::vector<float> second_moment;
  std::int64_t step_count = 0;
  float learning_rate = 2e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;

  static OptimizerState fresh(std::size_t parameter_count, float learning_rate);
};

/// Bias-corrected Adam, in place. Throws std::invalid_argument on length mismatch.
void adam_step(std::span<float> params, std::span<const float> grad, OptimizerState& state);

}  // namespace feddiff::nn
