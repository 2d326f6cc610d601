#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "feddiff/diffusion.hpp"
#include "feddiff/image_batch.hpp"
#include "feddiff/nn/config.hpp"
#include "feddiff/nn/parameters.hpp"
#include "feddiff/nn/unet.hpp"

namespace feddiff::nn {

struct GradientResult {
  std::vector<float> gradient;
  double loss = 0.0;
  diffusion::TrainingDraw draw;
};

/// Batch loss and parameter gradient for a fixed set of (t, eps) draws.
/// Samples are processed in a fixed number of contiguous chunks whose
/// partial gradients are summed in chunk order, so the result does not depend
/// on `workers`.
template <class T>
double loss_and_gradient(const UNet<T>& net, std::span<const T> params, const ImageBatch& x0,
                         const diffusion::TrainingDraw& draw, const diffusion::NoiseSchedule& sched,
                         std::span<const int> labels, std::span<T> grad, int workers = 1);

/// The trainable eps-predictor bound to one architecture.
class Denoiser {
 public:
  explicit Denoiser(const DenoiserConfig& config);

  const DenoiserConfig& config() const { return plan_->config(); }
  const UNetPlan& plan() const { return *plan_; }
  const Manifest& manifest() const { return plan_->manifest(); }

  void set_workers(int workers) { workers_ = workers; }
  int workers() const { return workers_; }

  ParameterVector init(std::uint64_t seed) const;

  ImageBatch predict_noise(const ParameterVector& params, const ImageBatch& x_t,
                           std::span<const int> t, std::span<const int> labels = {}) const;

  /// Binds params (and optional per-sample labels) into a NoisePredictor.
  diffusion::NoisePredictor predictor(const ParameterVector& params,
                                      std::vector<int> labels = {}) const;

  /// Draws (t, eps) exactly as diffusion::training_loss does, then returns
  /// the batch loss and its gradient.
  GradientResult loss_gradient(const ParameterVector& params, const ImageBatch& x0,
                               const diffusion::NoiseSchedule& sched, Rng& rng,
                               std::span<const int> labels = {}) const;

  void check_layout(const ParameterVector& params) const;

 private:
  void check_input(const ImageBatch& x, std::span<const int> labels) const;

  std::shared_ptr<const UNetPlan> plan_;
  int workers_ = 1;
};

}  // namespace feddiff::nn
