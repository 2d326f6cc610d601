#include "feddiff/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace feddiff::eval {

ScoreSummary inception_score(const Eigen::MatrixXd& probs, int splits) {
  const Eigen::Index n = probs.rows();
  if (n == 0 || probs.cols() == 0) throw std::invalid_argument("inception_score: empty input");
  if (splits < 1) throw std::invalid_argument("inception_score: splits must be >= 1");
  if (splits > n) throw std::invalid_argument("inception_score: more splits than samples");
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sum = probs.row(i).sum();
    if (!std::isfinite(sum) || std::abs(sum - 1.0) > 1e-5 || probs.row(i).minCoeff() < 0.0) {
      throw std::invalid_argument("inception_score: row " + std::to_string(i) +
                                  " is not a probability vector");
    }
  }
  const Eigen::Index base = n / splits;
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(splits));
  for (int s = 0; s < splits; ++s) {
    const Eigen::Index begin = s * base;
    const Eigen::Index end = s + 1 == splits ? n : begin + base;
    const auto part = probs.middleRows(begin, end - begin);
    const Eigen::RowVectorXd marginal = part.colwise().mean();
    double kl = 0.0;
    for (Eigen::Index i = 0; i < part.rows(); ++i) {
      for (Eigen::Index j = 0; j < part.cols(); ++j) {
        const double p = part(i, j);
        if (p > 0.0) kl += p * (std::log(p) - std::log(marginal(j)));
      }
    }
    scores.push_back(std::exp(kl / static_cast<double>(part.rows())));
  }
  ScoreSummary out;
  for (double v : scores) out.mean += v;
  out.mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double v : scores) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(scores.size()));
  return out;
}

GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw std::invalid_argument("gaussian_stats: need at least 2 samples");
  GaussianStats s;
  s.count = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  s.covariance = 0.5 * (cov + cov.transpose());
  return s;
}

Eigen::MatrixXd psd_matrix_sqrt(const Eigen::MatrixXd& m, double* clamped) {
  if (m.rows() != m.cols()) throw std::invalid_argument("psd_matrix_sqrt: matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-6 * scale) {
    throw std::invalid_argument("psd_matrix_sqrt: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw std::runtime_error("psd_matrix_sqrt: eigensolver failed");
  Eigen::VectorXd ev = es.eigenvalues();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < 0.0) {
      worst = std::max(worst, -ev(i));
      ev(i) = 0.0;
    }
  }
  if (clamped) *clamped = worst;
  const Eigen::MatrixXd& q = es.eigenvectors();
  return q * ev.cwiseSqrt().asDiagonal() * q.transpose();
}

FidDetail fid_detail(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows()) {
    throw std::invalid_argument("fid: feature dimensions differ");
  }
  FidDetail out;
  double c1 = 0.0;
  double c2 = 0.0;
  const Eigen::MatrixXd sa = psd_matrix_sqrt(a.covariance, &c1);
  const Eigen::MatrixXd inner = sa * b.covariance * sa;
  const Eigen::MatrixXd cross = psd_matrix_sqrt(0.5 * (inner + inner.transpose()), &c2);
  out.clamped_eigenvalue = std::max(c1, c2);
  if (out.clamped_eigenvalue > 1e-3) {
    std::cerr << "fid: clamped negative eigenvalue of magnitude " << out.clamped_eigenvalue << '\n';
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double trace = a.covariance.trace() + b.covariance.trace() - 2.0 * cross.trace();
  out.value = std::max(0.0, mean_term + trace);
  return out;
}

double fid(const GaussianStats& a, const GaussianStats& b) { return fid_detail(a, b).value; }

}  // namespace feddiff::eval
