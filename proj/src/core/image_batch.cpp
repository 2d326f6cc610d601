#include "feddiff/image_batch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace feddiff {

ImageBatch::ImageBatch(Shape4 shape, double fill) : shape_(shape), values_(shape.size(), fill) {
  if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0) {
    throw std::invalid_argument("ImageBatch: all dimensions must be positive");
  }
}

ImageBatch::ImageBatch(Shape4 shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0) {
    throw std::invalid_argument("ImageBatch: all dimensions must be positive");
  }
  if (values_.size() != shape.size()) {
    throw std::invalid_argument("ImageBatch: value count does not match shape");
  }
}

std::span<double> ImageBatch::sample(std::size_t i) {
  return std::span<double>(values_).subspan(i * shape_.sample_size(), shape_.sample_size());
}

std::span<const double> ImageBatch::sample(std::size_t i) const {
  return std::span<const double>(values_).subspan(i * shape_.sample_size(),
                                                  shape_.sample_size());
}

double& ImageBatch::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
  return values_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
}

double ImageBatch::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
  return values_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
}

bool ImageBatch::in_data_range() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::abs(v) <= 1.0; });
}

void require_same_shape(const ImageBatch& a, const ImageBatch& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

}  // namespace feddiff
