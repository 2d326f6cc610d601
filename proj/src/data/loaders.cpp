#include "feddiff/data/loaders.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

#include "feddiff/data/image_io.hpp"

namespace feddiff::data {

namespace fs = std::filesystem;

namespace {

void append_image(const RawImage& img, std::vector<float>& pixels) {
  // HWC bytes -> CHW floats.
  const std::size_t px = static_cast<std::size_t>(img.width) * img.height;
  const std::size_t base = pixels.size();
  pixels.resize(base + px * img.channels);
  for (int c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < px; ++i) {
      pixels[base + c * px + i] = from_byte(img.pixels[i * img.channels + c]);
    }
  }
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::uint32_t read_be32(std::istream& is, const fs::path& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error(path.string() + ": truncated");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

LabeledDataset load_image_folder(const fs::path& root, int image_size, int channels, Split split) {
  if (!fs::is_directory(root)) throw std::runtime_error("image folder " + root.string() + " not found");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw std::runtime_error("image folder " + root.string() + " has no class directories");

  std::vector<float> pixels;
  std::vector<int> labels;
  for (std::size_t k = 0; k < class_dirs.size(); ++k) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[k])) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("class directory " + class_dirs[k].string() + " is empty");
    for (const auto& f : files) {
      append_image(convert(read_image(f), channels, image_size, image_size), pixels);
      labels.push_back(static_cast<int>(k));
    }
  }
  return LabeledDataset("folder:" + root.filename().string(), split, channels, image_size,
                        image_size, static_cast<int>(class_dirs.size()), std::move(pixels),
                        std::move(labels));
}

LabeledDataset load_cifar10(const fs::path& dir, Split split, int image_size) {
  std::vector<fs::path> files;
  if (split == Split::kTrain) {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  constexpr int kSide = 32;
  constexpr std::size_t kRecord = 1 + 3 * kSide * kSide;
  std::vector<float> pixels;
  std::vector<int> labels;
  std::vector<unsigned char> record(kRecord);
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    if (!is) throw std::runtime_error("CIFAR-10 file " + f.string() + " not found");
    while (is.read(reinterpret_cast<char*>(record.data()), kRecord)) {
      RawImage img{kSide, kSide, 3, std::vector<std::uint8_t>(3 * kSide * kSide)};
      for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < kSide * kSide; ++i) img.pixels[i * 3 + c] = record[1 + c * kSide * kSide + i];
      }
      append_image(convert(img, 3, image_size, image_size), pixels);
      labels.push_back(record[0]);
    }
  }
  return LabeledDataset("cifar10", split, 3, image_size, image_size, 10, std::move(pixels),
                        std::move(labels));
}

LabeledDataset load_fashion_mnist(const fs::path& dir, Split split, int image_size) {
  const std::string prefix = split == Split::kTrain ? "train" : "t10k";
  const fs::path images_path = dir / (prefix + "-images-idx3-ubyte");
  const fs::path labels_path = dir / (prefix + "-labels-idx1-ubyte");
  std::ifstream images(images_path, std::ios::binary);
  std::ifstream label_file(labels_path, std::ios::binary);
  if (!images) throw std::runtime_error("Fashion-MNIST file " + images_path.string() + " not found");
  if (!label_file) throw std::runtime_error("Fashion-MNIST file " + labels_path.string() + " not found");
  if (read_be32(images, images_path) != 2051) throw std::runtime_error(images_path.string() + ": bad IDX magic");
  if (read_be32(label_file, labels_path) != 2049) throw std::runtime_error(labels_path.string() + ": bad IDX magic");
  const std::uint32_t n = read_be32(images, images_path);
  const auto rows = static_cast<int>(read_be32(images, images_path));
  const auto cols = static_cast<int>(read_be32(images, images_path));
  if (read_be32(label_file, labels_path) != n) throw std::runtime_error("Fashion-MNIST: image/label count mismatch");

  std::vector<float> pixels;
  std::vector<int> labels;
  RawImage img{cols, rows, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols)};
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!images.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
      throw std::runtime_error(images_path.string() + ": truncated");
    }
    char label = 0;
    if (!label_file.get(label)) throw std::runtime_error(labels_path.string() + ": truncated");
    append_image(convert(img, 1, image_size, image_size), pixels);
    labels.push_back(static_cast<unsigned char>(label));
  }
  return LabeledDataset("fashion_mnist", split, 1, image_size, image_size, 10, std::move(pixels),
                        std::move(labels));
}

}  // namespace feddiff::data
