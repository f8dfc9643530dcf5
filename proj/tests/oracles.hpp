#pragma once

// Shared helpers and independent oracles for the test suite. Everything here
// recomputes expected values through a different route than the library code
// under test.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracles {

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline double rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

/// Pairwise smoothness sum: (1/2) sum_ij w_ij (f_i - f_j)^2.
inline double pairwise_smoothness(const Eigen::MatrixXd& w,
                                  const Eigen::VectorXd& f) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      total += w(i, j) * (f[i] - f[j]) * (f[i] - f[j]);
  return total / 2.0;
}

/// Random symmetric positive-definite matrix with unit-scale spectrum.
inline Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal(rng);
  Eigen::MatrixXd out = g * g.transpose() / static_cast<double>(n);
  out.diagonal().array() += 0.5;
  return out;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

/// Dense solve through a fully different factorization than the library path.
inline Eigen::VectorXd solve_qr(const Eigen::MatrixXd& a,
                                const Eigen::VectorXd& b) {
  return a.colPivHouseholderQr().solve(b);
}

}  // namespace oracles
