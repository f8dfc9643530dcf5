#pragma once

#include <Eigen/Dense>
#include <optional>

#include "graphkernel/errors.hpp"

namespace graphkernel {

/// Relative threshold below which kernel eigenvalues (or spectral-map values)
/// are treated as zero when forming pseudo-inverses.
inline constexpr double kPinvTolRel = 1e-12;

/// Relative diagonal jitter added to a symmetric system when its Cholesky
/// factorization fails; the solve is retried once.
inline constexpr double kSolveJitterRel = 1e-12;

namespace linalg {

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

inline bool is_symmetric(const Eigen::MatrixXd& m, double tol) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

/// Cholesky factorization with one jittered retry. Returns std::nullopt when
/// the matrix is not positive definite even after jitter; callers translate
/// that into their domain-specific error.
inline std::optional<Eigen::LLT<Eigen::MatrixXd>> try_llt(
    const Eigen::MatrixXd& a, double jitter_rel = kSolveJitterRel) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = jitter_rel * a.trace() / static_cast<double>(a.rows());
  if (jitter <= 0.0) return std::nullopt;
  Eigen::MatrixXd jittered = a;
  jittered.diagonal().array() += jitter;
  llt.compute(jittered);
  if (llt.info() == Eigen::Success) return llt;
  return std::nullopt;
}

/// Solves A X = B for symmetric positive definite A (jittered retry on
/// factorization failure). Throws SingularSystem when A is not PD.
inline Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b,
                                 double jitter_rel = kSolveJitterRel) {
  auto llt = try_llt(a, jitter_rel);
  if (!llt) throw SingularSystem("symmetric solve failed");
  return llt->solve(b);
}

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

inline SymmetricEigen sym_eig(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
  if (es.info() != Eigen::Success) throw SingularSystem("eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

/// Reconstructs U g(diag) Uᵀ for a scalar function g applied to eigenvalues.
template <typename Fn>
Eigen::MatrixXd spectral_apply(const SymmetricEigen& eig, Fn&& g) {
  Eigen::VectorXd d(eig.values.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = g(eig.values[i]);
  return eig.vectors * d.asDiagonal() * eig.vectors.transpose();
}

/// Clips negative eigenvalues to zero (covariance kernels, PSD repair).
inline Eigen::MatrixXd psd_clip(const Eigen::MatrixXd& a) {
  const SymmetricEigen eig = sym_eig(a);
  return spectral_apply(eig, [](double v) { return v > 0.0 ? v : 0.0; });
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix with the relative
/// eigenvalue threshold kPinvTolRel.
inline Eigen::MatrixXd pinv_psd(const Eigen::MatrixXd& a) {
  const SymmetricEigen eig = sym_eig(a);
  const double cutoff = kPinvTolRel * std::max(eig.values.maxCoeff(), 0.0);
  return spectral_apply(
      eig, [cutoff](double v) { return v > cutoff ? 1.0 / v : 0.0; });
}

/// Symmetric PSD square root (negative roundoff eigenvalues clipped).
inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& a) {
  const SymmetricEigen eig = sym_eig(a);
  return spectral_apply(
      eig, [](double v) { return v > 0.0 ? std::sqrt(v) : 0.0; });
}

/// Pseudo-inverse square root with the kPinvTolRel threshold.
inline Eigen::MatrixXd pinv_sqrt_psd(const Eigen::MatrixXd& a) {
  const SymmetricEigen eig = sym_eig(a);
  const double cutoff = kPinvTolRel * std::max(eig.values.maxCoeff(), 0.0);
  return spectral_apply(eig, [cutoff](double v) {
    return v > cutoff ? 1.0 / std::sqrt(v) : 0.0;
  });
}

}  // namespace linalg
}  // namespace graphkernel
