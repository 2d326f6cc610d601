#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace feddiff {

struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t sample_size() const { return c * h * w; }
  std::size_t size() const { return n * sample_size(); }
  bool operator==(const Shape4&) const = default;
};

/// Batch of images in NCHW order. Data-domain batches hold pixels in [-1, 1];
/// intermediate diffusion states are unbounded.
class ImageBatch {
 public:
  ImageBatch() = default;
  explicit ImageBatch(Shape4 shape, double fill = 0.0);
  ImageBatch(Shape4 shape, std::vector<double> values);

  const Shape4& shape() const { return shape_; }
  std::size_t batch_size() const { return shape_.n; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<double> sample(std::size_t i);
  std::span<const double> sample(std::size_t i) const;

  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x);
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

  bool in_data_range() const;

 private:
  Shape4 shape_;
  std::vector<double> values_;
};

void require_same_shape(const ImageBatch& a, const ImageBatch& b, const char* what);

}  // namespace feddiff
