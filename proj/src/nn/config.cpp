#include "feddiff/nn/config.hpp"

#include <stdexcept>

namespace feddiff::nn {

void DenoiserConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("denoiser." + field + ": " + why);
  };
  if (in_channels < 1) fail("in_channels", "must be >= 1");
  if (image_size < 1) fail("image_size", "must be >= 1");
  if (base_channels < 1) fail("base_channels", "must be >= 1");
  if (channel_multipliers.empty()) fail("channel_multipliers", "need at least one stage");
  for (int m : channel_multipliers) {
    if (m < 1) fail("channel_multipliers", "entries must be >= 1");
  }
  if (res_blocks_per_stage < 1) fail("res_blocks_per_stage", "must be >= 1");
  if (time_embed_dim < 1) fail("time_embed_dim", "must be >= 1");
  const int factor = 1 << (stages() - 1);
  if (image_size % factor != 0) {
    fail("image_size", "must be divisible by 2^(stages-1) = " + std::to_string(factor));
  }
  if (class_conditional && num_classes < 1) fail("num_classes", "must be >= 1 when conditional");
}

DenoiserConfig full_scale_config(int in_channels, int image_size) {
  DenoiserConfig c;
  c.in_channels = in_channels;
  c.image_size = image_size;
  c.base_channels = 64;
  c.channel_multipliers = {1, 2, 2, 2};
  c.res_blocks_per_stage = 2;
  c.time_embed_dim = 256;
  return c;
}

DenoiserConfig desk_scale_config(int in_channels, int image_size) {
  DenoiserConfig c;
  c.in_channels = in_channels;
  c.image_size = image_size;
  c.base_channels = 32;
  c.channel_multipliers = {1, 2};
  c.res_blocks_per_stage = 1;
  c.time_embed_dim = 64;
  return c;
}

}  // namespace feddiff::nn
