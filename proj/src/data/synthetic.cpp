#include "feddiff/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "feddiff/rng.hpp"

namespace feddiff::data {

namespace {

// Foreground mask for `shape` at image side n, offset (oy, ox), extent s.
bool inside(int shape, int y, int x, int oy, int ox, int s) {
  const int ry = y - oy;
  const int rx = x - ox;
  if (ry < 0 || rx < 0 || ry >= s || rx >= s) return false;
  const int mid = s / 2;
  switch (shape) {
    case 0:  // filled square
      return true;
    case 1:  // plus
      return ry == mid || rx == mid;
    case 2:  // horizontal bar
      return ry == mid || ry == mid - (s > 3 ? 1 : 0);
    case 3:  // vertical bar
      return rx == mid || rx == mid - (s > 3 ? 1 : 0);
    case 4:  // diagonal
      return rx == ry;
    case 5:  // hollow square
      return ry == 0 || rx == 0 || ry == s - 1 || rx == s - 1;
    case 6: {  // disk
      const double cy = ry - (s - 1) / 2.0;
      const double cx = rx - (s - 1) / 2.0;
      return cy * cy + cx * cx <= (s / 2.0) * (s / 2.0);
    }
    case 7:  // anti-diagonal
      return rx == s - 1 - ry;
    case 8:  // checker
      return ((ry / std::max(1, s / 4)) + (rx / std::max(1, s / 4))) % 2 == 0;
    default:  // two dots
      return (ry == 0 && rx == 0) || (ry == s - 1 && rx == s - 1);
  }
}

// Per-class base colors in [0, 1] for 3-channel data.
constexpr double kPalette[10][3] = {{0.9, 0.2, 0.2}, {0.2, 0.4, 0.9}, {0.2, 0.8, 0.3},
                                    {0.9, 0.8, 0.2}, {0.7, 0.3, 0.8}, {0.2, 0.8, 0.8},
                                    {0.9, 0.5, 0.1}, {0.6, 0.6, 0.6}, {0.5, 0.3, 0.1},
                                    {0.9, 0.9, 0.9}};

}  // namespace

LabeledDataset make_synthetic_shapes(const SyntheticSpec& spec, Split split) {
  if (spec.num_classes < 1 || spec.num_classes > 10) {
    throw std::invalid_argument("synthetic dataset supports 1..10 classes");
  }
  if (spec.image_size < 4) throw std::invalid_argument("synthetic dataset needs image_size >= 4");
  if (spec.channels != 1 && spec.channels != 3) {
    throw std::invalid_argument("synthetic dataset supports 1 or 3 channels");
  }
  Rng rng(derive_seed(spec.seed, {split == Split::kTrain ? 1u : 2u}));
  const int n = spec.image_size;
  const std::size_t sample = static_cast<std::size_t>(spec.channels) * n * n;
  std::vector<float> pixels(spec.num_samples * sample);
  std::vector<int> labels(spec.num_samples);
  const int min_extent = std::max(3, n / 2);
  const int max_extent = std::max(min_extent, (3 * n) / 4);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    const int k = static_cast<int>(i % static_cast<std::size_t>(spec.num_classes));
    labels[i] = k;
    const int s = rng.uniform_int(min_extent, max_extent);
    const int oy = rng.uniform_int(0, n - s);
    const int ox = rng.uniform_int(0, n - s);
    const double intensity = 0.75 + 0.25 * rng.uniform();
    float* img = pixels.data() + i * sample;
    for (int c = 0; c < spec.channels; ++c) {
      const double base = spec.channels == 1 ? 1.0 : kPalette[k][c];
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const double fg = inside(k, y, x, oy, ox, s) ? intensity * base : 0.0;
          const double v = std::clamp(fg + 0.05 * rng.uniform(), 0.0, 1.0);
          img[(static_cast<std::size_t>(c) * n + y) * n + x] = static_cast<float>(2.0 * v - 1.0);
        }
      }
    }
  }
  return LabeledDataset("synthetic_shapes", split, static_cast<std::size_t>(spec.channels), n, n,
                        spec.num_classes, std::move(pixels), std::move(labels));
}

}  // namespace feddiff::data
