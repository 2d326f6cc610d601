#include "feddiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "feddiff/simd/kernels.hpp"

namespace feddiff::diffusion {

std::string_view variance_choice_name(VarianceChoice vc) {
  switch (vc) {
    case VarianceChoice::kBeta:
      return "beta";
    case VarianceChoice::kBetaTilde:
      return "beta_tilde";
    case VarianceChoice::kBetaTildeUnscaled:
      return "beta_tilde_unscaled";
  }
  return "unknown";
}

VarianceChoice parse_variance_choice(std::string_view name) {
  if (name == "beta") return VarianceChoice::kBeta;
  if (name == "beta_tilde") return VarianceChoice::kBetaTilde;
  if (name == "beta_tilde_unscaled") return VarianceChoice::kBetaTildeUnscaled;
  throw std::invalid_argument("unknown variance choice '" + std::string(name) + "'");
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
  const std::size_t T = betas_.size();
  alphas_.resize(T);
  alpha_bars_.resize(T);
  posterior_vars_.resize(T);
  double running = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double b = betas_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("NoiseSchedule: beta_" + std::to_string(i + 1) +
                                  " outside (0, 1)");
    }
    alphas_[i] = 1.0 - b;
    const double previous = running;
    running *= alphas_[i];
    alpha_bars_[i] = running;
    posterior_vars_[i] = (1.0 - previous) / (1.0 - running) * b;
  }
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > timesteps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(timesteps()) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

double NoiseSchedule::sigma_squared(int t, VarianceChoice vc) const {
  switch (vc) {
    case VarianceChoice::kBeta:
      return beta(t);
    case VarianceChoice::kBetaTilde:
      return posterior_variance(t);
    case VarianceChoice::kBetaTildeUnscaled:
      return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
  }
  throw std::invalid_argument("bad VarianceChoice");
}

NoiseSchedule build_linear_schedule(int timesteps, double beta_start, double beta_end) {
  if (timesteps < 1) throw std::invalid_argument("build_linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw std::invalid_argument(
        "build_linear_schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(timesteps));
  if (timesteps == 1) {
    betas[0] = beta_start;
  } else {
    const double step = (beta_end - beta_start) / static_cast<double>(timesteps - 1);
    for (int i = 0; i < timesteps; ++i) betas[i] = beta_start + step * i;
    betas.back() = beta_end;
  }
  return NoiseSchedule(std::move(betas));
}

namespace {

void check_timesteps(const ImageBatch& x, std::span<const int> t, const NoiseSchedule& sched) {
  if (t.size() != x.batch_size()) {
    throw std::invalid_argument("need exactly one timestep per batch element");
  }
  for (int ti : t) {
    if (ti < 1 || ti > sched.timesteps()) {
      throw std::out_of_range("timestep " + std::to_string(ti) + " out of range");
    }
  }
}

}  // namespace

ImageBatch forward_sample(const ImageBatch& x0, std::span<const int> t, const ImageBatch& eps,
                          const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "forward_sample");
  check_timesteps(x0, t, sched);
  ImageBatch out(x0.shape());
  for (std::size_t i = 0; i < x0.batch_size(); ++i) {
    const double abar = sched.alpha_bar(t[i]);
    simd::axpby(std::sqrt(abar), x0.sample(i), std::sqrt(1.0 - abar), eps.sample(i),
                out.sample(i));
  }
  return out;
}

ImageBatch forward_step(const ImageBatch& x_prev, std::span<const int> t, const ImageBatch& eps,
                        const NoiseSchedule& sched) {
  require_same_shape(x_prev, eps, "forward_step");
  check_timesteps(x_prev, t, sched);
  ImageBatch out(x_prev.shape());
  for (std::size_t i = 0; i < x_prev.batch_size(); ++i) {
    simd::axpby(std::sqrt(sched.alpha(t[i])), x_prev.sample(i), std::sqrt(sched.beta(t[i])),
                eps.sample(i), out.sample(i));
  }
  return out;
}

TrainingDraw draw_training_noise(const Shape4& shape, const NoiseSchedule& sched, Rng& rng) {
  TrainingDraw draw{std::vector<int>(shape.n), ImageBatch(shape)};
  for (std::size_t i = 0; i < shape.n; ++i) {
    draw.timesteps[i] = rng.uniform_int(1, sched.timesteps());
    for (double& v : draw.noise.sample(i)) v = rng.normal();
  }
  return draw;
}

double noise_prediction_loss(const ImageBatch& eps, const ImageBatch& predicted) {
  require_same_shape(eps, predicted, "noise prediction");
  double total = 0.0;
  for (std::size_t i = 0; i < eps.batch_size(); ++i) {
    const auto e = eps.sample(i);
    const auto p = predicted.sample(i);
    double sq = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) {
      const double d = e[j] - p[j];
      sq += d * d;
    }
    total += sq;
  }
  return total / static_cast<double>(eps.batch_size());
}

LossResult training_loss(const NoisePredictor& predict, const ImageBatch& x0,
                         const NoiseSchedule& sched, Rng& rng) {
  if (x0.batch_size() == 0) throw std::invalid_argument("training_loss: empty batch");
  LossResult result{0.0, draw_training_noise(x0.shape(), sched, rng)};
  const ImageBatch x_t = forward_sample(x0, result.draw.timesteps, result.draw.noise, sched);
  const ImageBatch predicted = predict(x_t, result.draw.timesteps);
  if (!(predicted.shape() == x0.shape())) {
    throw std::invalid_argument("training_loss: predictor output shape mismatch");
  }
  result.loss = noise_prediction_loss(result.draw.noise, predicted);
  return result;
}

ImageBatch reverse_step(const ImageBatch& x_t, int t, const ImageBatch& eps_pred,
                        const ImageBatch& z, const NoiseSchedule& sched, VarianceChoice vc) {
  require_same_shape(x_t, eps_pred, "reverse_step");
  require_same_shape(x_t, z, "reverse_step");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  const double eps_coef = (1.0 - sched.alpha(t)) / std::sqrt(1.0 - sched.alpha_bar(t));
  const double sigma = std::sqrt(sched.sigma_squared(t, vc));
  ImageBatch out(x_t.shape());
  const auto x = x_t.values();
  const auto e = eps_pred.values();
  const auto zz = z.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = inv_sqrt_alpha * (x[i] - eps_coef * e[i]) + sigma * zz[i];
  }
  return out;
}

ImageBatch generate(const NoisePredictor& predict, const NoiseSchedule& sched, std::size_t n,
                    std::size_t channels, std::size_t height, std::size_t width, Rng& rng,
                    VarianceChoice vc) {
  if (n == 0) throw std::invalid_argument("generate: sample count must be >= 1");
  const Shape4 shape{n, channels, height, width};
  ImageBatch x(shape);
  for (double& v : x.values()) v = rng.normal();
  ImageBatch z(shape);
  for (int t = sched.timesteps(); t >= 1; --t) {
    const std::vector<int> ts(n, t);
    const ImageBatch eps = predict(x, ts);
    if (t > 1) {
      for (double& v : z.values()) v = rng.normal();
    } else {
      std::fill(z.values().begin(), z.values().end(), 0.0);
    }
    x = reverse_step(x, t, eps, z, sched, vc);
  }
  return x;
}

ImageBatch oracle_epsilon_single_point(const ImageBatch& x_t, int t, const ImageBatch& x0,
                                       const NoiseSchedule& sched) {
  const Shape4& s = x_t.shape();
  const Shape4& p = x0.shape();
  const bool broadcast = p.n == 1 && p.c == s.c && p.h == s.h && p.w == s.w;
  if (!broadcast && !(p == s)) {
    throw std::invalid_argument("oracle_epsilon_single_point: x0 shape mismatch");
  }
  const double abar = sched.alpha_bar(t);
  if (!(abar < 1.0)) throw std::invalid_argument("oracle_epsilon_single_point: abar_t == 1");
  const double a = std::sqrt(abar);
  const double inv_b = 1.0 / std::sqrt(1.0 - abar);
  ImageBatch out(s);
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto xt = x_t.sample(i);
    const auto ref = x0.sample(broadcast ? 0 : i);
    auto o = out.sample(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = (xt[j] - a * ref[j]) * inv_b;
  }
  return out;
}

}  // namespace feddiff::diffusion
