#include "feddiff/eval/backend.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "feddiff/rng.hpp"

namespace feddiff::eval {

namespace {

// 3x3 conv, zero padding 1, then ReLU. in is [cin][h][w].
void conv3x3_relu(const std::vector<double>& in, std::size_t cin, std::size_t h, std::size_t w,
                  const std::vector<double>& weight, const std::vector<double>& bias,
                  std::size_t cout, std::size_t stride, std::vector<double>& out,
                  std::size_t& oh, std::size_t& ow) {
  oh = (h - 1) / stride + 1;
  ow = (w - 1) / stride + 1;
  out.assign(cout * oh * ow, 0.0);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = bias[o];
        for (std::size_t c = 0; c < cin; ++c) {
          const double* k = &weight[((o * cin + c) * 3) * 3];
          for (int dy = 0; dy < 3; ++dy) {
            const long iy = static_cast<long>(y * stride) + dy - 1;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (int dx = 0; dx < 3; ++dx) {
              const long ix = static_cast<long>(x * stride) + dx - 1;
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              acc += k[dy * 3 + dx] * in[(c * h + iy) * w + ix];
            }
          }
        }
        out[(o * oh + y) * ow + x] = std::max(0.0, acc);
      }
    }
  }
}

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

}  // namespace

DeskBackend::DeskBackend(const data::LabeledDataset& train, const DeskBackendSpec& spec)
    : channels_(train.channels()), size_(train.height()), classes_(train.num_classes()) {
  if (train.size() < 2) throw std::invalid_argument("DeskBackend: need at least 2 training images");
  if (train.height() != train.width() || train.height() < 2) {
    throw std::invalid_argument("DeskBackend: images must be square, at least 2x2");
  }
  if (classes_ < 1) throw std::invalid_argument("DeskBackend: dataset has no classes");
  Rng rng(spec.seed);
  const double s1 = std::sqrt(2.0 / static_cast<double>(channels_ * 9));
  const double s2 = std::sqrt(2.0 / static_cast<double>(kWidth * 9));
  w1_.resize(kWidth * channels_ * 9);
  for (double& v : w1_) v = s1 * rng.normal();
  b1_.assign(kWidth, 0.0);
  for (double& v : b1_) v = 0.1 * rng.normal();
  w2_.resize(kWidth * kWidth * 9);
  for (double& v : w2_) v = s2 * rng.normal();
  b2_.assign(kWidth, 0.0);
  for (double& v : b2_) v = 0.1 * rng.normal();

  const Eigen::MatrixXd feats = embed(train.all());
  feature_mean_ = feats.colwise().mean();
  feature_scale_ = ((feats.rowwise() - feature_mean_).array().square().colwise().mean().sqrt())
                       .unaryExpr([](double v) { return v > 1e-8 ? 1.0 / v : 1.0; })
                       .matrix();
  const Eigen::MatrixXd x =
      (feats.rowwise() - feature_mean_).array().rowwise() * feature_scale_.array();

  const Eigen::Index n = x.rows();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, classes_);
  for (Eigen::Index i = 0; i < n; ++i) y(i, train.labels()[static_cast<std::size_t>(i)]) = 1.0;
  weights_ = Eigen::MatrixXd::Zero(x.cols(), classes_);
  bias_ = Eigen::RowVectorXd::Zero(classes_);
  const double lr = spec.classifier_learning_rate;
  for (int it = 0; it < spec.classifier_iterations; ++it) {
    Eigen::MatrixXd z = x * weights_;
    z.rowwise() += bias_;
    const Eigen::MatrixXd err = (softmax_rows(std::move(z)) - y) / static_cast<double>(n);
    weights_ -= lr * (x.transpose() * err + spec.l2 * weights_);
    bias_ -= lr * err.colwise().sum();
  }

  id_ = "desk-v1/seed=" + std::to_string(spec.seed) + "/data=" + train.name() + "/" +
        std::to_string(channels_) + "x" + std::to_string(size_) + "/k=" +
        std::to_string(classes_);
}

Eigen::MatrixXd DeskBackend::embed(const ImageBatch& images) const {
  const Shape4& s = images.shape();
  if (s.c != channels_ || s.h != size_ || s.w != size_) {
    throw std::invalid_argument("DeskBackend: image shape does not match the backend");
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(feature_dim()));
  std::vector<double> in;
  std::vector<double> h1;
  std::vector<double> h2;
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto px = images.sample(i);
    in.assign(px.begin(), px.end());
    std::size_t h = 0, w = 0, h2s = 0, w2s = 0;
    conv3x3_relu(in, channels_, size_, size_, w1_, b1_, kWidth, 1, h1, h, w);
    conv3x3_relu(h1, kWidth, h, w, w2_, b2_, kWidth, 2, h2, h2s, w2s);
    // Quadrant average pooling; the split point rounds up for odd sizes.
    const std::size_t my = (h2s + 1) / 2;
    const std::size_t mx = (w2s + 1) / 2;
    for (std::size_t c = 0; c < kWidth; ++c) {
      for (int q = 0; q < 4; ++q) {
        const std::size_t y0 = q / 2 ? my : 0, y1 = q / 2 ? h2s : my;
        const std::size_t x0 = q % 2 ? mx : 0, x1 = q % 2 ? w2s : mx;
        double acc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x, ++cnt) acc += h2[(c * h2s + y) * w2s + x];
        }
        if (cnt == 0) {
          // 1-pixel map: every quadrant sees the single value.
          acc = h2[c * h2s * w2s];
          cnt = 1;
        }
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c * 4 + q)) =
            acc / static_cast<double>(cnt);
      }
    }
  }
  return out;
}

Eigen::MatrixXd DeskBackend::logits(const Eigen::MatrixXd& features) const {
  const Eigen::MatrixXd x =
      (features.rowwise() - feature_mean_).array().rowwise() * feature_scale_.array();
  Eigen::MatrixXd z = x * weights_;
  z.rowwise() += bias_;
  return z;
}

Eigen::MatrixXd DeskBackend::classify(const ImageBatch& images) const {
  return softmax_rows(logits(embed(images)));
}

double DeskBackend::accuracy(const data::LabeledDataset& set) const {
  if (set.empty()) return 0.0;
  const Eigen::MatrixXd z = logits(embed(set.all()));
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index arg = 0;
    z.row(i).maxCoeff(&arg);
    if (arg == set.labels()[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

}  // namespace feddiff::eval
