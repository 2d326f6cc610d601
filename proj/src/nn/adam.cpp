#include "feddiff/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "feddiff/simd/kernels.hpp"

namespace feddiff::nn {

OptimizerState OptimizerState::fresh(std::size_t parameter_count, float learning_rate) {
  OptimizerState s;
  s.first_moment.assign(parameter_count, 0.0f);
  s.second_moment.assign(parameter_count, 0.0f);
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(std::span<float> params, std::span<const float> grad, OptimizerState& state) {
  if (params.size() != grad.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw std::invalid_argument("adam_step: length mismatch");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  simd::AdamCoefficients c{};
  c.learning_rate = state.learning_rate;
  c.beta1 = state.beta1;
  c.beta2 = state.beta2;
  c.epsilon = state.epsilon;
  c.bias_correction1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), t));
  c.bias_correction2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), t));
  simd::adam_update(params, grad, state.first_moment, state.second_moment, c);
}

}  // namespace feddiff::nn
