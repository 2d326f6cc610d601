#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace feddiff::data {

/// 8-bit interleaved (HWC) raster.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads PNG, or binary PGM/PPM (P5/P6, maxval 255). Throws
/// std::runtime_error naming the path on failure.
RawImage read_image(const std::filesystem::path& path);

/// Writes an 8-bit gray (1 channel) or RGB (3 channel) PNG.
void write_png(const std::filesystem::path& path, const RawImage& image);

/// Converts channel count (gray <-> RGB, drops alpha) and resizes with
/// bilinear interpolation (identity when sizes already match).
RawImage convert(const RawImage& image, int channels, int width, int height);

/// Affine [-1, 1] -> [0, 255] with round-half-up, clamped.
std::uint8_t to_byte(double value);
/// Affine [0, 255] -> [-1, 1].
inline float from_byte(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

}  // namespace feddiff::data
