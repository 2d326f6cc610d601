#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "feddiff/image_batch.hpp"

namespace feddiff::data {

enum class Split { kTrain, kTest };

/// Images stored as float CHW in [-1, 1] with integer labels in {0..K-1}.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::string name, Split split, std::size_t channels, std::size_t height,
                 std::size_t width, int num_classes, std::vector<float> pixels,
                 std::vector<int> labels);

  const std::string& name() const { return name_; }
  Split split() const { return split_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t sample_size() const { return channels_ * height_ * width_; }
  int num_classes() const { return num_classes_; }

  const std::vector<int>& labels() const { return labels_; }
  std::span<const float> image(std::size_t i) const;

  ImageBatch gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  ImageBatch all() const;

  /// Per-class counts, length K.
  std::vector<std::size_t> class_histogram() const;

 private:
  std::string name_;
  Split split_ = Split::kTrain;
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  int num_classes_ = 0;
  std::vector<float> pixels_;
  std::vector<int> labels_;
};

}  // namespace feddiff::data
