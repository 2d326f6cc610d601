#include "feddiff/data/dataset.hpp"

#include <stdexcept>

namespace feddiff::data {

LabeledDataset::LabeledDataset(std::string name, Split split, std::size_t channels,
                               std::size_t height, std::size_t width, int num_classes,
                               std::vector<float> pixels, std::vector<int> labels)
    : name_(std::move(name)),
      split_(split),
      channels_(channels),
      height_(height),
      width_(width),
      num_classes_(num_classes),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)) {
  if (pixels_.size() != labels_.size() * sample_size()) {
    throw std::invalid_argument("LabeledDataset: image count does not match label count");
  }
  for (int l : labels_) {
    if (l < 0 || l >= num_classes_) throw std::invalid_argument("LabeledDataset: label out of range");
  }
}

std::span<const float> LabeledDataset::image(std::size_t i) const {
  return std::span<const float>(pixels_).subspan(i * sample_size(), sample_size());
}

ImageBatch LabeledDataset::gather(std::span<const std::size_t> indices) const {
  ImageBatch out(Shape4{indices.size(), channels_, height_, width_});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = image(indices[i]);
    auto dst = out.sample(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j];
  }
  return out;
}

std::vector<int> LabeledDataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels_.at(i));
  return out;
}

ImageBatch LabeledDataset::all() const {
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return gather(idx);
}

std::vector<std::size_t> LabeledDataset::class_histogram() const {
  std::vector<std::size_t> h(static_cast<std::size_t>(num_classes_), 0);
  for (int l : labels_) ++h[l];
  return h;
}

}  // namespace feddiff::data
