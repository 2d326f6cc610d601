#pragma once

#include <cstdint>

#include "feddiff/data/dataset.hpp"

namespace feddiff::data {

struct SyntheticSpec {
  std::size_t num_samples = 1024;
  int num_classes = 2;  // at most 10 shapes
  int image_size = 8;
  int channels = 1;
  std::uint64_t seed = 0;
};

/// Class-balanced toy shapes (square, plus, bars, ...) with random placement,
/// size and intensity on a dark background. Labels cycle 0..K-1.
LabeledDataset make_synthetic_shapes(const SyntheticSpec& spec, Split split = Split::kTrain);

}  // namespace feddiff::data
