#include "feddiff/nn/denoiser.hpp"

#include <algorithm>
#include <stdexcept>

#include "feddiff/parallel.hpp"

namespace feddiff::nn {

namespace {

constexpr std::size_t kGradientChunks = 8;

}  // namespace

template <class T>
double loss_and_gradient(const UNet<T>& net, std::span<const T> params, const ImageBatch& x0,
                         const diffusion::TrainingDraw& draw, const diffusion::NoiseSchedule& sched,
                         std::span<const int> labels, std::span<T> grad, int workers) {
  const std::size_t B = x0.batch_size();
  if (B == 0) throw std::invalid_argument("loss_and_gradient: empty batch");
  const ImageBatch x_t = diffusion::forward_sample(x0, draw.timesteps, draw.noise, sched);
  const std::size_t sample = x0.shape().sample_size();
  const std::size_t chunks = std::min(B, kGradientChunks);
  const std::size_t P = params.size();
  std::vector<std::vector<T>> partial(chunks, std::vector<T>(P, T(0)));
  std::vector<double> chunk_loss(chunks, 0.0);
  const double inv_b = 1.0 / static_cast<double>(B);

  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t begin = c * B / chunks;
    const std::size_t end = (c + 1) * B / chunks;
    UNetCache<T> cache;
    std::vector<T> in(sample);
    std::vector<T> out(sample);
    std::vector<T> dout(sample);
    for (std::size_t i = begin; i < end; ++i) {
      const auto xs = x_t.sample(i);
      std::transform(xs.begin(), xs.end(), in.begin(), [](double v) { return static_cast<T>(v); });
      const int label = labels.empty() ? -1 : labels[i];
      net.forward(params, in, draw.timesteps[i], label, cache, out);
      const auto eps = draw.noise.sample(i);
      double sq = 0.0;
      for (std::size_t j = 0; j < sample; ++j) {
        const double d = eps[j] - static_cast<double>(out[j]);
        sq += d * d;
        dout[j] = static_cast<T>(-2.0 * d * inv_b);
      }
      chunk_loss[c] += sq;
      net.backward(params, cache, dout, partial[c]);
    }
  });

  std::fill(grad.begin(), grad.end(), T(0));
  double loss = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t k = 0; k < P; ++k) grad[k] += partial[c][k];
    loss += chunk_loss[c];
  }
  return loss * inv_b;
}

template double loss_and_gradient<float>(const UNet<float>&, std::span<const float>,
                                         const ImageBatch&, const diffusion::TrainingDraw&,
                                         const diffusion::NoiseSchedule&, std::span<const int>,
                                         std::span<float>, int);
template double loss_and_gradient<double>(const UNet<double>&, std::span<const double>,
                                          const ImageBatch&, const diffusion::TrainingDraw&,
                                          const diffusion::NoiseSchedule&, std::span<const int>,
                                          std::span<double>, int);

Denoiser::Denoiser(const DenoiserConfig& config)
    : plan_(std::make_shared<const UNetPlan>(config)) {}

ParameterVector Denoiser::init(std::uint64_t seed) const {
  return ParameterVector{plan_->initial_values(seed), plan_->manifest()};
}

void Denoiser::check_layout(const ParameterVector& params) const {
  if (params.manifest != plan_->manifest() || params.values.size() != plan_->parameter_count()) {
    throw std::invalid_argument("parameter manifest does not match denoiser configuration");
  }
}

void Denoiser::check_input(const ImageBatch& x, std::span<const int> labels) const {
  const DenoiserConfig& cfg = config();
  const Shape4& s = x.shape();
  if (s.c != static_cast<std::size_t>(cfg.in_channels) ||
      s.h != static_cast<std::size_t>(cfg.image_size) ||
      s.w != static_cast<std::size_t>(cfg.image_size)) {
    throw std::invalid_argument("input shape does not match denoiser configuration");
  }
  if (cfg.class_conditional) {
    if (labels.size() != s.n) throw std::invalid_argument("class-conditional model needs one label per sample");
    for (int l : labels) {
      if (l < 0 || l >= cfg.num_classes) throw std::invalid_argument("class label out of range");
    }
  } else if (!labels.empty()) {
    throw std::invalid_argument("labels given to an unconditional model");
  }
}

ImageBatch Denoiser::predict_noise(const ParameterVector& params, const ImageBatch& x_t,
                                   std::span<const int> t, std::span<const int> labels) const {
  check_layout(params);
  check_input(x_t, labels);
  const std::size_t n = x_t.batch_size();
  if (t.size() != n) throw std::invalid_argument("predict_noise: need one timestep per sample");
  const UNet<float> net(*plan_);
  const std::size_t sample = x_t.shape().sample_size();
  ImageBatch out(x_t.shape());
  const std::size_t chunks = std::min(n, kGradientChunks);
  parallel_for(chunks, workers_, [&](std::size_t c) {
    UNetCache<float> cache;
    std::vector<float> in(sample);
    std::vector<float> res(sample);
    for (std::size_t i = c * n / chunks; i < (c + 1) * n / chunks; ++i) {
      const auto xs = x_t.sample(i);
      std::transform(xs.begin(), xs.end(), in.begin(), [](double v) { return static_cast<float>(v); });
      net.forward(params.values, in, t[i], labels.empty() ? -1 : labels[i], cache, res);
      std::copy(res.begin(), res.end(), out.sample(i).begin());
    }
  });
  return out;
}

diffusion::NoisePredictor Denoiser::predictor(const ParameterVector& params,
                                              std::vector<int> labels) const {
  return [this, &params, labels = std::move(labels)](const ImageBatch& x,
                                                      std::span<const int> t) {
    return predict_noise(params, x, t, labels);
  };
}

GradientResult Denoiser::loss_gradient(const ParameterVector& params, const ImageBatch& x0,
                                       const diffusion::NoiseSchedule& sched, Rng& rng,
                                       std::span<const int> labels) const {
  check_layout(params);
  check_input(x0, labels);
  GradientResult result;
  result.draw = diffusion::draw_training_noise(x0.shape(), sched, rng);
  result.gradient.assign(plan_->parameter_count(), 0.0f);
  const UNet<float> net(*plan_);
  result.loss = loss_and_gradient<float>(net, params.values, x0, result.draw, sched, labels,
                                         result.gradient, workers_);
  return result;
}

}  // namespace feddiff::nn
