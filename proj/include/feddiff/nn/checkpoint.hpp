#pragma once

// Binary checkpoint, all integers and floats little-endian:
//   magic "FEDDCKPT" | u32 format_version | i64 round
//   u32 len + bytes: denoiser config echo (JSON)
//   u32 entry count, then per entry: u32 len + name, u32 rank, u64 dims...
//   u64 value count | f32 values

#include <cstdint>
#include <filesystem>

#include "feddiff/nn/config.hpp"
#include "feddiff/nn/parameters.hpp"

namespace feddiff::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  DenoiserConfig config;
  ParameterVector params;
  std::int64_t round = 0;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const DenoiserConfig& config);
DenoiserConfig config_from_json(const std::string& text);

}  // namespace feddiff::nn
