#pragma once

#include <string>
#include <vector>

namespace feddiff::nn {

/// Small U-Net denoiser: residual blocks with group norm and SiLU, a
/// sinusoidal timestep embedding fed through a two-layer MLP, one skip
/// connection per resolution stage.
struct DenoiserConfig {
  int in_channels = 1;
  int image_size = 8;
  int base_channels = 32;
  std::vector<int> channel_multipliers{1, 2};
  int res_blocks_per_stage = 1;
  int time_embed_dim = 64;
  bool class_conditional = false;
  int num_classes = 0;

  int stages() const { return static_cast<int>(channel_multipliers.size()); }
  int stage_channels(int s) const { return base_channels * channel_multipliers.at(s); }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool operator==(const DenoiserConfig&) const = default;
};

/// 32x32 preset at the scale used for long benchmark runs.
DenoiserConfig full_scale_config(int in_channels, int image_size = 32);

/// CPU-friendly preset for tests and toy runs.
DenoiserConfig desk_scale_config(int in_channels, int image_size = 8);

}  // namespace feddiff::nn
