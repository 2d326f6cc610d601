#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "feddiff/nn/config.hpp"
#include "feddiff/nn/layers.hpp"
#include "feddiff/nn/parameters.hpp"

namespace feddiff::nn {

struct ResBlockSpec {
  int in_channels = 0;
  int out_channels = 0;
  GroupNormSpec norm1;
  Conv2dSpec conv1;
  LinearSpec time_proj;
  GroupNormSpec norm2;
  Conv2dSpec conv2;
  bool has_skip_conv = false;
  Conv2dSpec skip;
};

struct StagePlan {
  int channels = 0;
  int resolution = 0;
  std::vector<ResBlockSpec> down;
  bool has_downsample = false;
  Conv2dSpec downsample;  // 3x3 stride 2
  std::vector<ResBlockSpec> up;
  bool has_upsample = false;
  Conv2dSpec upsample;  // nearest 2x then 3x3
};

/// Architecture layout: every layer's offsets into the flat parameter array,
/// built in canonical manifest order.
class UNetPlan {
 public:
  explicit UNetPlan(const DenoiserConfig& config);

  const DenoiserConfig& config() const { return config_; }
  const Manifest& manifest() const { return manifest_; }
  std::size_t parameter_count() const { return count_; }

  int sinusoid_dim() const { return sinusoid_dim_; }
  const LinearSpec& time_fc1() const { return time_fc1_; }
  const LinearSpec& time_fc2() const { return time_fc2_; }
  std::size_t class_embedding() const { return class_embedding_; }
  const Conv2dSpec& conv_in() const { return conv_in_; }
  const std::vector<StagePlan>& stages() const { return stages_; }
  const ResBlockSpec& mid() const { return mid_; }
  const GroupNormSpec& norm_out() const { return norm_out_; }
  const Conv2dSpec& conv_out() const { return conv_out_; }

  /// Deterministic initial weights: uniform(+-1/sqrt(fan_in)) for conv and
  /// linear weights, zero biases, unit norm scales.
  std::vector<float> initial_values(std::uint64_t seed) const;

 private:
  std::size_t add(const std::string& name, std::vector<std::size_t> shape);
  Conv2dSpec add_conv(const std::string& name, int in, int out, int kernel, int stride);
  LinearSpec add_linear(const std::string& name, int in, int out);
  GroupNormSpec add_norm(const std::string& name, int channels);
  ResBlockSpec add_res_block(const std::string& name, int in, int out);

  DenoiserConfig config_;
  Manifest manifest_;
  std::size_t count_ = 0;
  int sinusoid_dim_ = 0;
  LinearSpec time_fc1_;
  LinearSpec time_fc2_;
  std::size_t class_embedding_ = 0;
  Conv2dSpec conv_in_;
  std::vector<StagePlan> stages_;
  ResBlockSpec mid_;
  GroupNormSpec norm_out_;
  Conv2dSpec conv_out_;
};

template <class T>
struct ResBlockCache {
  int h = 0;
  int w = 0;
  std::vector<T> x;
  std::vector<T> norm1_stats;
  std::vector<T> norm1_out;
  std::vector<T> col1;
  std::vector<T> conv1_out;  // includes the time projection
  std::vector<T> norm2_stats;
  std::vector<T> norm2_out;
  std::vector<T> col2;
  std::vector<T> col_skip;
};

/// Activations of one forward pass, consumed by backward().
template <class T>
struct UNetCache {
  int label = -1;
  std::vector<T> sinusoid;
  std::vector<T> fc1_out;
  std::vector<T> fc1_act;
  std::vector<T> temb;
  std::vector<T> temb_act;
  std::vector<T> col_in;
  std::vector<ResBlockCache<T>> blocks;  // execution order
  std::vector<std::vector<T>> skips;
  std::vector<std::vector<T>> down_cols;
  std::vector<std::vector<T>> up_inputs;  // upsampled activations
  std::vector<std::vector<T>> up_cols;
  std::vector<T> final_in;
  std::vector<T> norm_out_stats;
  std::vector<T> norm_out;
  std::vector<T> act_out;
  std::vector<T> col_out;
};

/// Single-sample forward/backward over a flat parameter array of type T.
template <class T>
class UNet {
 public:
  explicit UNet(const UNetPlan& plan) : plan_(&plan) {}

  const UNetPlan& plan() const { return *plan_; }

  /// x and out are CHW for one sample. label is ignored unless the model is
  /// class-conditional.
  void forward(std::span<const T> params, std::span<const T> x, int t, int label,
               UNetCache<T>& cache, std::span<T> out) const;

  /// Adds d(out)/d(params) contracted with dout into grad.
  void backward(std::span<const T> params, const UNetCache<T>& cache, std::span<const T> dout,
                std::span<T> grad) const;

 private:
  void res_block_forward(const VectorOps<T>& ops, const T* params, const ResBlockSpec& b,
                         std::vector<T>& h, int hh, int ww, const std::vector<T>& temb_act,
                         ResBlockCache<T>& cache) const;
  void res_block_backward(const VectorOps<T>& ops, const T* params, const ResBlockSpec& b,
                          const ResBlockCache<T>& cache, const std::vector<T>& temb_act,
                          std::vector<T>& dh, std::vector<T>& dtemb_act, T* grad) const;

  const UNetPlan* plan_;
};

extern template class UNet<float>;
extern template class UNet<double>;

/// sin/cos timestep features of even dimension `dim`.
template <class T>
void sinusoidal_embedding(int t, int dim, std::vector<T>& out);

}  // namespace feddiff::nn
