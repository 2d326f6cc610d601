#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "feddiff/image_batch.hpp"
#include "feddiff/rng.hpp"

namespace testutil {

inline feddiff::ImageBatch random_batch(feddiff::Shape4 s, std::uint64_t seed, double scale = 1.0) {
  feddiff::Rng rng(seed);
  feddiff::ImageBatch b(s);
  for (double& v : b.values()) v = scale * rng.normal();
  return b;
}

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("feddiff_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
