#pragma once

#include <filesystem>

#include "feddiff/data/dataset.hpp"

namespace feddiff::data {

/// Directory-per-class layout: root/<class>/<image>. Classes are the sorted
/// subdirectory names; labels are their positions in that order. Images are
/// converted to `channels` and resized to image_size x image_size.
LabeledDataset load_image_folder(const std::filesystem::path& root, int image_size, int channels,
                                 Split split = Split::kTrain);

/// CIFAR-10 binary version (data_batch_{1..5}.bin / test_batch.bin).
LabeledDataset load_cifar10(const std::filesystem::path& dir, Split split, int image_size = 32);

/// Fashion-MNIST IDX files ({train,t10k}-{images-idx3,labels-idx1}-ubyte).
LabeledDataset load_fashion_mnist(const std::filesystem::path& dir, Split split,
                                  int image_size = 32);

}  // namespace feddiff::data
