#pragma once

#include <Eigen/Dense>

namespace feddiff::eval {

struct ScoreSummary {
  double mean = 0.0;
  double std = 0.0;
};

/// exp(E_x KL(p(y|x) || p(y))) per split, rows of `probs` being p(y|x).
/// Splits are contiguous; each holds n / splits rows and the last one also
/// takes the remainder. Returns the mean and population std across splits.
ScoreSummary inception_score(const Eigen::MatrixXd& probs, int splits = 10);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased, symmetrized
  std::size_t count = 0;
};

/// Rows are samples.
GaussianStats gaussian_stats(const Eigen::MatrixXd& features);

/// Symmetric square root by eigendecomposition, negative eigenvalues set to 0.
/// `clamped`, if given, receives the magnitude of the most negative eigenvalue.
Eigen::MatrixXd psd_matrix_sqrt(const Eigen::MatrixXd& m, double* clamped = nullptr);

struct FidDetail {
  double value = 0.0;
  double clamped_eigenvalue = 0.0;  // largest magnitude set to zero
};

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), floored at 0.
FidDetail fid_detail(const GaussianStats& a, const GaussianStats& b);
double fid(const GaussianStats& a, const GaussianStats& b);

}  // namespace feddiff::eval
