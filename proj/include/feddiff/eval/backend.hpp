#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "feddiff/data/dataset.hpp"
#include "feddiff/image_batch.hpp"

namespace feddiff::eval {

/// Maps images in [-1, 1] to features (for FID) and class probabilities (for IS).
class FeatureBackend {
 public:
  virtual ~FeatureBackend() = default;

  /// Recorded in every report; scores from different ids are not comparable.
  virtual std::string id() const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual std::size_t num_classes() const = 0;

  /// One row per image.
  virtual Eigen::MatrixXd embed(const ImageBatch& images) const = 0;
  virtual Eigen::MatrixXd classify(const ImageBatch& images) const = 0;
};

struct DeskBackendSpec {
  std::uint64_t seed = 1234;
  int classifier_iterations = 300;
  double classifier_learning_rate = 0.5;
  double l2 = 1e-4;
};

/// CPU backend: a fixed random conv embedder (3x3 conv to 16 channels, ReLU,
/// stride-2 3x3 conv, ReLU, average over the four image quadrants -> 64
/// features) and a softmax regression on standardized features, trained by
/// full-batch gradient descent on the given dataset.
class DeskBackend final : public FeatureBackend {
 public:
  static constexpr int kWidth = 16;

  DeskBackend(const data::LabeledDataset& train, const DeskBackendSpec& spec = {});

  std::string id() const override { return id_; }
  std::size_t feature_dim() const override { return 4 * kWidth; }
  std::size_t num_classes() const override { return static_cast<std::size_t>(classes_); }

  Eigen::MatrixXd embed(const ImageBatch& images) const override;
  Eigen::MatrixXd classify(const ImageBatch& images) const override;

  /// Fraction of `set` whose argmax class matches its label.
  double accuracy(const data::LabeledDataset& set) const;

 private:
  Eigen::MatrixXd logits(const Eigen::MatrixXd& features) const;

  std::string id_;
  std::size_t channels_ = 0;
  std::size_t size_ = 0;
  int classes_ = 0;
  std::vector<double> w1_;  // [16][C][3][3]
  std::vector<double> b1_;
  std::vector<double> w2_;  // [16][16][3][3]
  std::vector<double> b2_;
  Eigen::RowVectorXd feature_mean_;
  Eigen::RowVectorXd feature_scale_;
  Eigen::MatrixXd weights_;  // 64 x K
  Eigen::RowVectorXd bias_;
};

}  // namespace feddiff::eval
