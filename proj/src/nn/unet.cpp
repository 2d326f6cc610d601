#include "feddiff/nn/unet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "feddiff/rng.hpp"

namespace feddiff::nn {

UNetPlan::UNetPlan(const DenoiserConfig& config) : config_(config) {
  config_.validate();
  const int base = config_.base_channels;
  const int temb = config_.time_embed_dim;
  sinusoid_dim_ = base % 2 == 0 ? base : base + 1;

  time_fc1_ = add_linear("time_mlp.fc1", sinusoid_dim_, temb);
  time_fc2_ = add_linear("time_mlp.fc2", temb, temb);
  if (config_.class_conditional) {
    class_embedding_ = add("class_embedding",
                           {static_cast<std::size_t>(config_.num_classes),
                            static_cast<std::size_t>(temb)});
  }
  conv_in_ = add_conv("conv_in", config_.in_channels, base, 3, 1);

  const int S = config_.stages();
  stages_.resize(static_cast<std::size_t>(S));
  int channels = base;
  int resolution = config_.image_size;
  for (int s = 0; s < S; ++s) {
    StagePlan& stage = stages_[s];
    stage.channels = config_.stage_channels(s);
    stage.resolution = resolution;
    for (int b = 0; b < config_.res_blocks_per_stage; ++b) {
      stage.down.push_back(add_res_block(
          "down." + std::to_string(s) + ".block." + std::to_string(b), channels, stage.channels));
      channels = stage.channels;
    }
    if (s + 1 < S) {
      stage.has_downsample = true;
      stage.downsample =
          add_conv("down." + std::to_string(s) + ".downsample", channels, channels, 3, 2);
      resolution /= 2;
    }
  }
  mid_ = add_res_block("mid", channels, channels);
  for (int s = S - 1; s >= 0; --s) {
    StagePlan& stage = stages_[s];
    int in = channels + stage.channels;
    for (int b = 0; b < config_.res_blocks_per_stage; ++b) {
      stage.up.push_back(add_res_block(
          "up." + std::to_string(s) + ".block." + std::to_string(b), in, stage.channels));
      in = stage.channels;
    }
    channels = stage.channels;
    if (s > 0) {
      stage.has_upsample = true;
      stage.upsample = add_conv("up." + std::to_string(s) + ".upsample", channels, channels, 3, 1);
    }
  }
  norm_out_ = add_norm("norm_out", channels);
  conv_out_ = add_conv("conv_out", channels, config_.in_channels, 3, 1);
}

std::size_t UNetPlan::add(const std::string& name, std::vector<std::size_t> shape) {
  const std::size_t offset = count_;
  ManifestEntry entry{name, std::move(shape)};
  count_ += entry.size();
  manifest_.push_back(std::move(entry));
  return offset;
}

Conv2dSpec UNetPlan::add_conv(const std::string& name, int in, int out, int kernel, int stride) {
  Conv2dSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = stride;
  s.weight = add(name + ".weight", {static_cast<std::size_t>(out), static_cast<std::size_t>(in),
                                    static_cast<std::size_t>(kernel),
                                    static_cast<std::size_t>(kernel)});
  s.bias = add(name + ".bias", {static_cast<std::size_t>(out)});
  return s;
}

LinearSpec UNetPlan::add_linear(const std::string& name, int in, int out) {
  LinearSpec s;
  s.in_features = in;
  s.out_features = out;
  s.weight = add(name + ".weight", {static_cast<std::size_t>(out), static_cast<std::size_t>(in)});
  s.bias = add(name + ".bias", {static_cast<std::size_t>(out)});
  return s;
}

GroupNormSpec UNetPlan::add_norm(const std::string& name, int channels) {
  GroupNormSpec s;
  s.channels = channels;
  s.groups = group_count(channels);
  s.gamma = add(name + ".gamma", {static_cast<std::size_t>(channels)});
  s.beta = add(name + ".beta", {static_cast<std::size_t>(channels)});
  return s;
}

ResBlockSpec UNetPlan::add_res_block(const std::string& name, int in, int out) {
  ResBlockSpec b;
  b.in_channels = in;
  b.out_channels = out;
  b.norm1 = add_norm(name + ".norm1", in);
  b.conv1 = add_conv(name + ".conv1", in, out, 3, 1);
  b.time_proj = add_linear(name + ".time_proj", config_.time_embed_dim, out);
  b.norm2 = add_norm(name + ".norm2", out);
  b.conv2 = add_conv(name + ".conv2", out, out, 3, 1);
  if (in != out) {
    b.has_skip_conv = true;
    b.skip = add_conv(name + ".skip", in, out, 1, 1);
  }
  return b;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<float> UNetPlan::initial_values(std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<float> values(count_, 0.0f);
  std::size_t offset = 0;
  for (const ManifestEntry& e : manifest_) {
    const std::size_t n = e.size();
    float* v = values.data() + offset;
    if (ends_with(e.name, ".weight")) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < e.shape.size(); ++d) fan_in *= e.shape[d];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    } else if (ends_with(e.name, ".gamma")) {
      std::fill(v, v + n, 1.0f);
    } else if (e.name == "class_embedding") {
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<float>(rng.normal());
    }
    offset += n;
  }
  return values;
}

template <class T>
void sinusoidal_embedding(int t, int dim, std::vector<T>& out) {
  const int half = dim / 2;
  out.assign(static_cast<std::size_t>(dim), T(0));
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    const double arg = static_cast<double>(t) * freq;
    out[i] = static_cast<T>(std::sin(arg));
    out[half + i] = static_cast<T>(std::cos(arg));
  }
}

template void sinusoidal_embedding<float>(int, int, std::vector<float>&);
template void sinusoidal_embedding<double>(int, int, std::vector<double>&);

template <class T>
void UNet<T>::res_block_forward(const VectorOps<T>& ops, const T* params, const ResBlockSpec& b,
                                std::vector<T>& h, int hh, int ww,
                                const std::vector<T>& temb_act, ResBlockCache<T>& c) const {
  const std::size_t hw = static_cast<std::size_t>(hh) * ww;
  const std::size_t out_n = static_cast<std::size_t>(b.out_channels) * hw;
  c.h = hh;
  c.w = ww;
  c.x = h;

  c.norm1_out.resize(c.x.size());
  group_norm_forward(params, b.norm1, c.x.data(), hw, c.norm1_out.data(), c.norm1_stats);
  std::vector<T> act(c.x.size());
  silu_forward(c.norm1_out.data(), act.size(), act.data());
  c.conv1_out.resize(out_n);
  conv2d_forward(ops, params, b.conv1, act.data(), hh, ww, c.conv1_out.data(), c.col1);

  std::vector<T> proj(static_cast<std::size_t>(b.out_channels));
  linear_forward(ops, params, b.time_proj, temb_act.data(), proj.data());
  for (int ch = 0; ch < b.out_channels; ++ch) {
    T* row = c.conv1_out.data() + static_cast<std::size_t>(ch) * hw;
    for (std::size_t i = 0; i < hw; ++i) row[i] += proj[ch];
  }

  c.norm2_out.resize(out_n);
  group_norm_forward(params, b.norm2, c.conv1_out.data(), hw, c.norm2_out.data(), c.norm2_stats);
  act.resize(out_n);
  silu_forward(c.norm2_out.data(), out_n, act.data());
  h.assign(out_n, T(0));
  conv2d_forward(ops, params, b.conv2, act.data(), hh, ww, h.data(), c.col2);

  if (b.has_skip_conv) {
    std::vector<T> skip(out_n);
    conv2d_forward(ops, params, b.skip, c.x.data(), hh, ww, skip.data(), c.col_skip);
    for (std::size_t i = 0; i < out_n; ++i) h[i] += skip[i];
  } else {
    for (std::size_t i = 0; i < out_n; ++i) h[i] += c.x[i];
  }
}

template <class T>
void UNet<T>::res_block_backward(const VectorOps<T>& ops, const T* params, const ResBlockSpec& b,
                                 const ResBlockCache<T>& c, const std::vector<T>& temb_act,
                                 std::vector<T>& dh, std::vector<T>& dtemb_act, T* grad) const {
  const int hh = c.h;
  const int ww = c.w;
  const std::size_t hw = static_cast<std::size_t>(hh) * ww;
  const std::size_t in_n = static_cast<std::size_t>(b.in_channels) * hw;
  const std::size_t out_n = static_cast<std::size_t>(b.out_channels) * hw;
  std::vector<T> dx(in_n, T(0));
  std::vector<T> scratch;

  if (b.has_skip_conv) {
    conv2d_backward(ops, params, b.skip, hh, ww, c.col_skip, dh.data(), grad, dx.data(), scratch);
  } else {
    for (std::size_t i = 0; i < in_n; ++i) dx[i] += dh[i];
  }

  std::vector<T> dact(out_n, T(0));
  conv2d_backward(ops, params, b.conv2, hh, ww, c.col2, dh.data(), grad, dact.data(), scratch);
  std::vector<T> dnorm2(out_n, T(0));
  silu_backward(c.norm2_out.data(), dact.data(), out_n, dnorm2.data());
  std::vector<T> dconv1(out_n, T(0));
  group_norm_backward(params, b.norm2, c.conv1_out.data(), hw, c.norm2_stats, dnorm2.data(), grad,
                      dconv1.data());

  std::vector<T> dproj(static_cast<std::size_t>(b.out_channels), T(0));
  for (int ch = 0; ch < b.out_channels; ++ch) {
    const T* row = dconv1.data() + static_cast<std::size_t>(ch) * hw;
    T s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += row[i];
    dproj[ch] = s;
  }
  linear_backward(ops, params, b.time_proj, temb_act.data(), dproj.data(), grad, dtemb_act.data());

  dact.assign(in_n, T(0));
  conv2d_backward(ops, params, b.conv1, hh, ww, c.col1, dconv1.data(), grad, dact.data(), scratch);
  std::vector<T> dnorm1(in_n, T(0));
  silu_backward(c.norm1_out.data(), dact.data(), in_n, dnorm1.data());
  group_norm_backward(params, b.norm1, c.x.data(), hw, c.norm1_stats, dnorm1.data(), grad,
                      dx.data());
  dh = std::move(dx);
}

template <class T>
void UNet<T>::forward(std::span<const T> params, std::span<const T> x, int t, int label,
                      UNetCache<T>& cache, std::span<T> out) const {
  const UNetPlan& plan = *plan_;
  const DenoiserConfig& cfg = plan.config();
  if (params.size() != plan.parameter_count()) {
    throw std::invalid_argument("UNet::forward: parameter count mismatch");
  }
  const std::size_t sample =
      static_cast<std::size_t>(cfg.in_channels) * cfg.image_size * cfg.image_size;
  if (x.size() != sample || out.size() != sample) {
    throw std::invalid_argument("UNet::forward: input/output size mismatch");
  }
  if (cfg.class_conditional && (label < 0 || label >= cfg.num_classes)) {
    throw std::invalid_argument("UNet::forward: class label out of range");
  }
  const VectorOps<T> ops = active_ops<T>();
  const T* P = params.data();
  const int temb = cfg.time_embed_dim;

  cache.label = cfg.class_conditional ? label : -1;
  sinusoidal_embedding(t, plan.sinusoid_dim(), cache.sinusoid);
  cache.fc1_out.resize(static_cast<std::size_t>(temb));
  linear_forward(ops, P, plan.time_fc1(), cache.sinusoid.data(), cache.fc1_out.data());
  cache.fc1_act.resize(cache.fc1_out.size());
  silu_forward(cache.fc1_out.data(), cache.fc1_out.size(), cache.fc1_act.data());
  cache.temb.resize(static_cast<std::size_t>(temb));
  linear_forward(ops, P, plan.time_fc2(), cache.fc1_act.data(), cache.temb.data());
  if (cfg.class_conditional) {
    const T* row = P + plan.class_embedding() + static_cast<std::size_t>(label) * temb;
    for (int i = 0; i < temb; ++i) cache.temb[i] += row[i];
  }
  cache.temb_act.resize(cache.temb.size());
  silu_forward(cache.temb.data(), cache.temb.size(), cache.temb_act.data());

  int H = cfg.image_size;
  std::vector<T> h(static_cast<std::size_t>(cfg.base_channels) * H * H);
  conv2d_forward(ops, P, plan.conv_in(), x.data(), H, H, h.data(), cache.col_in);

  const auto& stages = plan.stages();
  const std::size_t S = stages.size();
  std::size_t block_count = 1;
  for (const StagePlan& s : stages) block_count += s.down.size() + s.up.size();
  cache.blocks.resize(block_count);
  cache.skips.resize(S);
  cache.down_cols.resize(S);
  cache.up_inputs.resize(S);
  cache.up_cols.resize(S);

  std::size_t bi = 0;
  for (std::size_t s = 0; s < S; ++s) {
    for (const ResBlockSpec& b : stages[s].down) {
      res_block_forward(ops, P, b, h, H, H, cache.temb_act, cache.blocks[bi++]);
    }
    cache.skips[s] = h;
    if (stages[s].has_downsample) {
      const Conv2dSpec& ds = stages[s].downsample;
      const int oh = ds.out_size(H);
      std::vector<T> next(static_cast<std::size_t>(ds.out_channels) * oh * oh);
      conv2d_forward(ops, P, ds, h.data(), H, H, next.data(), cache.down_cols[s]);
      h = std::move(next);
      H = oh;
    }
  }
  res_block_forward(ops, P, plan.mid(), h, H, H, cache.temb_act, cache.blocks[bi++]);
  for (std::size_t si = S; si-- > 0;) {
    h.insert(h.end(), cache.skips[si].begin(), cache.skips[si].end());
    for (const ResBlockSpec& b : stages[si].up) {
      res_block_forward(ops, P, b, h, H, H, cache.temb_act, cache.blocks[bi++]);
    }
    if (stages[si].has_upsample) {
      const Conv2dSpec& us = stages[si].upsample;
      std::vector<T>& up = cache.up_inputs[si];
      up.resize(static_cast<std::size_t>(us.in_channels) * 4 * H * H);
      upsample_nearest2x_forward(h.data(), us.in_channels, H, H, up.data());
      H *= 2;
      h.assign(static_cast<std::size_t>(us.out_channels) * H * H, T(0));
      conv2d_forward(ops, P, us, up.data(), H, H, h.data(), cache.up_cols[si]);
    }
  }

  const std::size_t hw = static_cast<std::size_t>(H) * H;
  cache.final_in = std::move(h);
  cache.norm_out.resize(cache.final_in.size());
  group_norm_forward(P, plan.norm_out(), cache.final_in.data(), hw, cache.norm_out.data(),
                     cache.norm_out_stats);
  cache.act_out.resize(cache.norm_out.size());
  silu_forward(cache.norm_out.data(), cache.norm_out.size(), cache.act_out.data());
  conv2d_forward(ops, P, plan.conv_out(), cache.act_out.data(), H, H, out.data(), cache.col_out);
}

template <class T>
void UNet<T>::backward(std::span<const T> params, const UNetCache<T>& cache,
                       std::span<const T> dout, std::span<T> grad) const {
  const UNetPlan& plan = *plan_;
  const DenoiserConfig& cfg = plan.config();
  if (grad.size() != plan.parameter_count() || params.size() != plan.parameter_count()) {
    throw std::invalid_argument("UNet::backward: parameter count mismatch");
  }
  const VectorOps<T> ops = active_ops<T>();
  const T* P = params.data();
  T* G = grad.data();
  std::vector<T> scratch;

  int H = cfg.image_size;
  const std::size_t hw = static_cast<std::size_t>(H) * H;
  std::vector<T> dact(cache.act_out.size(), T(0));
  conv2d_backward(ops, P, plan.conv_out(), H, H, cache.col_out, dout.data(), G, dact.data(),
                  scratch);
  std::vector<T> dnorm(dact.size(), T(0));
  silu_backward(cache.norm_out.data(), dact.data(), dact.size(), dnorm.data());
  std::vector<T> dh(cache.final_in.size(), T(0));
  group_norm_backward(P, plan.norm_out(), cache.final_in.data(), hw, cache.norm_out_stats,
                      dnorm.data(), G, dh.data());

  std::vector<T> dtemb_act(cache.temb_act.size(), T(0));
  const auto& stages = plan.stages();
  const std::size_t S = stages.size();
  std::vector<std::vector<T>> dskips(S);
  std::size_t bi = cache.blocks.size();

  for (std::size_t s = 0; s < S; ++s) {
    if (stages[s].has_upsample) {
      const Conv2dSpec& us = stages[s].upsample;
      std::vector<T> dup(cache.up_inputs[s].size(), T(0));
      conv2d_backward(ops, P, us, H, H, cache.up_cols[s], dh.data(), G, dup.data(), scratch);
      H /= 2;
      dh.assign(static_cast<std::size_t>(us.in_channels) * H * H, T(0));
      upsample_nearest2x_backward(dup.data(), us.in_channels, H, H, dh.data());
    }
    for (std::size_t b = stages[s].up.size(); b-- > 0;) {
      res_block_backward(ops, P, stages[s].up[b], cache.blocks[--bi], cache.temb_act, dh,
                         dtemb_act, G);
    }
    const std::size_t skip_n = cache.skips[s].size();
    dskips[s].assign(dh.end() - static_cast<std::ptrdiff_t>(skip_n), dh.end());
    dh.resize(dh.size() - skip_n);
  }
  res_block_backward(ops, P, plan.mid(), cache.blocks[--bi], cache.temb_act, dh, dtemb_act, G);
  for (std::size_t s = S; s-- > 0;) {
    if (stages[s].has_downsample) {
      const Conv2dSpec& ds = stages[s].downsample;
      const int in_h = H * 2;
      std::vector<T> din(cache.skips[s].size(), T(0));
      conv2d_backward(ops, P, ds, in_h, in_h, cache.down_cols[s], dh.data(), G, din.data(),
                      scratch);
      dh = std::move(din);
      H = in_h;
    }
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dskips[s][i];
    for (std::size_t b = stages[s].down.size(); b-- > 0;) {
      res_block_backward(ops, P, stages[s].down[b], cache.blocks[--bi], cache.temb_act, dh,
                         dtemb_act, G);
    }
  }
  conv2d_backward(ops, P, plan.conv_in(), H, H, cache.col_in, dh.data(), G,
                  static_cast<T*>(nullptr), scratch);

  std::vector<T> dtemb(cache.temb.size(), T(0));
  silu_backward(cache.temb.data(), dtemb_act.data(), dtemb.size(), dtemb.data());
  if (cfg.class_conditional) {
    T* row = G + plan.class_embedding() +
             static_cast<std::size_t>(cache.label) * cfg.time_embed_dim;
    for (std::size_t i = 0; i < dtemb.size(); ++i) row[i] += dtemb[i];
  }
  std::vector<T> dfc1_act(cache.fc1_act.size(), T(0));
  linear_backward(ops, P, plan.time_fc2(), cache.fc1_act.data(), dtemb.data(), G, dfc1_act.data());
  std::vector<T> dfc1(cache.fc1_out.size(), T(0));
  silu_backward(cache.fc1_out.data(), dfc1_act.data(), dfc1.size(), dfc1.data());
  linear_backward(ops, P, plan.time_fc1(), cache.sinusoid.data(), dfc1.data(), G,
                  static_cast<T*>(nullptr));
}

template class UNet<float>;
template class UNet<double>;

}  // namespace feddiff::nn
