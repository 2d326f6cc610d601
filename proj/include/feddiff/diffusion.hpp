#pragma once

// DDPM forward corruption, noise-prediction loss and ancestral sampler.
// Timesteps are 1-based: t in {1..T}, with alpha_bar(0) = 1.

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "feddiff/image_batch.hpp"
#include "feddiff/rng.hpp"

namespace feddiff::diffusion {

/// Per-step sampling variance sigma_t^2.
enum class VarianceChoice {
  kBeta,       // sigma^2 = beta_t
  kBetaTilde,  // sigma^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
  // (1 - abar_{t-1}) / (1 - abar_t) without the beta_t factor. Kept only for
  // side-by-side comparison with the posterior form above.
  kBetaTildeUnscaled,
};

std::string_view variance_choice_name(VarianceChoice vc);
VarianceChoice parse_variance_choice(std::string_view name);

class NoiseSchedule {
 public:
  /// Builds every derived vector from the betas; validates 0 < beta < 1.
  explicit NoiseSchedule(std::vector<double> betas);

  int timesteps() const { return static_cast<int>(betas_.size()); }

  // 1-based accessors.
  double beta(int t) const { return betas_.at(index(t)); }
  double alpha(int t) const { return alphas_.at(index(t)); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars_.at(index(t)); }
  double posterior_variance(int t) const { return posterior_vars_.at(index(t)); }
  double sigma_squared(int t, VarianceChoice vc) const;

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }
  const std::vector<double>& posterior_variances() const { return posterior_vars_; }

 private:
  std::size_t index(int t) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::vector<double> posterior_vars_;
};

inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

/// Betas evenly spaced from beta_start to beta_end inclusive.
NoiseSchedule build_linear_schedule(int timesteps, double beta_start = kDefaultBetaStart,
                                    double beta_end = kDefaultBetaEnd);

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, with one t per sample.
ImageBatch forward_sample(const ImageBatch& x0, std::span<const int> t, const ImageBatch& eps,
                          const NoiseSchedule& sched);

/// sqrt(alpha_t) * x_prev + sqrt(beta_t) * eps.
ImageBatch forward_step(const ImageBatch& x_prev, std::span<const int> t, const ImageBatch& eps,
                        const NoiseSchedule& sched);

/// eps-prediction model: (x_t, per-sample t) -> predicted noise, same shape.
using NoisePredictor = std::function<ImageBatch(const ImageBatch&, std::span<const int>)>;

/// Random quantities consumed by one loss evaluation.
struct TrainingDraw {
  std::vector<int> timesteps;
  ImageBatch noise;
};

/// For each sample in order: t ~ U{1..T}, then sample_size standard normals.
TrainingDraw draw_training_noise(const Shape4& shape, const NoiseSchedule& sched, Rng& rng);

struct LossResult {
  double loss = 0.0;
  TrainingDraw draw;
};

/// Batch mean of ||eps - predict(x_t, t)||^2.
double noise_prediction_loss(const ImageBatch& eps, const ImageBatch& predicted);

LossResult training_loss(const NoisePredictor& predict, const ImageBatch& x0,
                         const NoiseSchedule& sched, Rng& rng);

ImageBatch reverse_step(const ImageBatch& x_t, int t, const ImageBatch& eps_pred,
                        const ImageBatch& z, const NoiseSchedule& sched, VarianceChoice vc);

/// Ancestral sampling from x_T ~ N(0, I). Draw order: x_T, then for
/// t = T..2 one fresh z batch after the prediction at t. z = 0 at t = 1.
ImageBatch generate(const NoisePredictor& predict, const NoiseSchedule& sched, std::size_t n,
                    std::size_t channels, std::size_t height, std::size_t width, Rng& rng,
                    VarianceChoice vc);

/// Loss-optimal predictor for a one-point dataset:
/// (x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t). `x0` is either a single
/// sample broadcast over the batch or a batch of the same shape as x_t.
ImageBatch oracle_epsilon_single_point(const ImageBatch& x_t, int t, const ImageBatch& x0,
                                       const NoiseSchedule& sched);

}  // namespace feddiff::diffusion
