#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphkernel/errors.hpp"
#include "graphkernel/graph.hpp"
#include "graphkernel/kernels.hpp"
#include "graphkernel/linalg.hpp"
#include "graphkernel/observation.hpp"

namespace graphkernel {

struct KrrFit {
  Eigen::VectorXd alpha;  // S expansion coefficients
  Eigen::VectorXd f_hat;  // n reconstructed signal
};

/// Ridge regression in the RKHS induced by `kernel`: solves
/// (K_bar + mu*S*I) alpha = y and expands f_hat = K Phi' alpha.
inline KrrFit krr_fit(const KernelMatrix& kernel, const Observation& obs,
                      double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("krr_fit: mu must be positive");
  const std::size_t n = kernel.n();
  const std::size_t s = obs.mask.size();
  for (std::size_t idx : obs.mask.indices)
    if (idx >= n) throw DimensionMismatch("krr_fit: mask exceeds kernel size");
  if (s == 0)
    return KrrFit{Eigen::VectorXd(0),
                  Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))};

  Eigen::MatrixXd a = mask_ops::select_block(kernel.k, obs.mask);
  a.diagonal().array() += mu * static_cast<double>(s);
  const Eigen::VectorXd alpha = linalg::solve_spd(a, obs.y);
  Eigen::VectorXd f_hat = mask_ops::select_cols(kernel.k, obs.mask) * alpha;
  return KrrFit{alpha, std::move(f_hat)};
}

/// Least-squares fit constrained to the span of the first `bandwidth`
/// Laplacian eigenvectors.
inline Eigen::VectorXd bl_estimate(const SpectralDecomposition& decomp,
                                   const Observation& obs,
                                   std::size_t bandwidth) {
  const std::size_t n = decomp.n();
  if (bandwidth < 1 || bandwidth > n)
    throw std::invalid_argument("bl_estimate: bandwidth out of range");
  for (std::size_t idx : obs.mask.indices)
    if (idx >= n) throw DimensionMismatch("bl_estimate: mask exceeds n");

  const Eigen::MatrixXd u_b =
      decomp.eigenvectors.leftCols(static_cast<Eigen::Index>(bandwidth));
  const Eigen::MatrixXd m = mask_ops::select_rows(u_b, obs.mask);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double cutoff =
      1e-10 * (svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > cutoff) ++rank;
  if (rank < static_cast<Eigen::Index>(bandwidth))
    throw RankDeficient("bandlimited system Phi U_B has rank " +
                        std::to_string(rank) + " < bandwidth " +
                        std::to_string(bandwidth));
  return u_b * svd.solve(obs.y);
}

/// Linear minimum-MSE estimate under a covariance prior:
/// f_hat = C Phi' (Phi C Phi' + sigma_e^2 I)^{-1} y.
inline Eigen::VectorXd lmmse_estimate(const KernelMatrix& covariance,
                                      const Observation& obs,
                                      double sigma_e2) {
  if (sigma_e2 < 0.0)
    throw std::invalid_argument("lmmse_estimate: negative noise variance");
  const std::size_t n = covariance.n();
  const std::size_t s = obs.mask.size();
  for (std::size_t idx : obs.mask.indices)
    if (idx >= n) throw DimensionMismatch("lmmse_estimate: mask exceeds n");
  if (s == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));

  Eigen::MatrixXd a = mask_ops::select_block(covariance.k, obs.mask);
  a.diagonal().array() += sigma_e2;
  const Eigen::VectorXd w = linalg::solve_spd(a, obs.y);
  return mask_ops::select_cols(covariance.k, obs.mask) * w;
}

struct SemiparametricFit {
  Eigen::VectorXd alpha;   // S kernel coefficients
  Eigen::VectorXd beta;    // M basis coefficients
  Eigen::VectorXd f_hat;   // n reconstructed signal
  double objective = 0.0;  // final value of the fitted criterion
  std::vector<double> objective_trace;  // per-iteration values (eps variant)
  std::size_t iterations = 0;
};

namespace detail {

/// Masked basis with a full-column-rank guarantee.
inline Eigen::MatrixXd masked_basis(const ParametricBasis& basis,
                                    const Observation& obs, std::size_t n) {
  if (basis.n() != n)
    throw DimensionMismatch("parametric basis rows vs kernel size");
  const Eigen::MatrixXd b_bar = mask_ops::select_rows(basis.b, obs.mask);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b_bar);
  const double top =
      svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > 1e-10 * top) ++rank;
  if (rank < static_cast<Eigen::Index>(basis.m()))
    throw RankDeficientBasis("masked basis has rank " + std::to_string(rank) +
                             " < " + std::to_string(basis.m()) + " columns");
  return b_bar;
}

}  // namespace detail

/// Semiparametric estimate with square loss. The kernel coefficients solve
/// (P K_bar + mu*S*I) alpha = P y with P the orthogonal projector onto the
/// complement of the masked basis span; beta absorbs the basis component.
inline SemiparametricFit semiparametric_fit_square(const KernelMatrix& kernel,
                                                   const ParametricBasis& basis,
                                                   const Observation& obs,
                                                   double mu) {
  if (!(mu > 0.0))
    throw std::invalid_argument("semiparametric_fit_square: mu must be > 0");
  const std::size_t n = kernel.n();
  const std::size_t s = obs.mask.size();
  for (std::size_t idx : obs.mask.indices)
    if (idx >= n) throw DimensionMismatch("semiparametric: mask exceeds n");
  const Eigen::MatrixXd b_bar = detail::masked_basis(basis, obs, n);
  const Eigen::MatrixXd k_bar = mask_ops::select_block(kernel.k, obs.mask);

  const Eigen::MatrixXd gram = b_bar.transpose() * b_bar;
  const Eigen::LLT<Eigen::MatrixXd> gram_llt(gram);
  if (gram_llt.info() != Eigen::Success)
    throw RankDeficientBasis("masked basis Gram matrix not positive definite");
  const Eigen::MatrixXd proj =
      Eigen::MatrixXd::Identity(b_bar.rows(), b_bar.rows()) -
      b_bar * gram_llt.solve(b_bar.transpose());

  // P K_bar is not symmetric; its spectrum is still real nonnegative, so the
  // shifted system is invertible and a plain LU factorization applies.
  Eigen::MatrixXd sys = proj * k_bar;
  sys.diagonal().array() += mu * static_cast<double>(s);
  const Eigen::VectorXd alpha = sys.partialPivLu().solve(proj * obs.y);
  const Eigen::VectorXd beta =
      gram_llt.solve(b_bar.transpose() * (obs.y - k_bar * alpha));

  SemiparametricFit fit;
  fit.alpha = alpha;
  fit.beta = beta;
  fit.f_hat =
      basis.b * beta + mask_ops::select_cols(kernel.k, obs.mask) * alpha;
  const Eigen::VectorXd resid = obs.y - k_bar * alpha - b_bar * beta;
  fit.objective = resid.squaredNorm() / static_cast<double>(s) +
                  mu * alpha.dot(k_bar * alpha);
  fit.iterations = 1;
  return fit;
}

namespace detail {

/// Proximal map of t * (1/S) * sum_i max(0, |u_i| - eps): shrink toward the
/// insensitivity tube, coordinatewise.
inline Eigen::VectorXd tube_prox(const Eigen::VectorXd& v, double eps,
                                 double shift) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a <= eps)
      out[i] = v[i];
    else if (a <= eps + shift)
      out[i] = (v[i] > 0 ? eps : -eps);
    else
      out[i] = v[i] - (v[i] > 0 ? shift : -shift);
  }
  return out;
}

}  // namespace detail

/// Semiparametric estimate with the eps-insensitive loss
/// (1/S) sum max(0, |y_s - f(v_s)| - eps) + mu * ||kernel part||^2.
///
/// Solved exactly in the residual variable u = y - K_bar alpha - B_bar beta:
/// the kernel penalty at the cheapest representation of a fitted vector w is a
/// quadratic form w' H w / 2 obtained from one saddle-point factorization, and
/// the loss has a closed-form prox. A monotone accelerated proximal-gradient
/// loop then descends the composite objective; the recorded trace is the true
/// objective at the recoverable coefficients, so it never increases.
inline SemiparametricFit semiparametric_fit_eps(const KernelMatrix& kernel,
                                                const ParametricBasis& basis,
                                                const Observation& obs,
                                                double mu, double eps,
                                                std::size_t max_iters = 50000,
                                                double kkt_tol = 1e-6) {
  if (!(mu > 0.0))
    throw std::invalid_argument("semiparametric_fit_eps: mu must be > 0");
  if (eps < 0.0)
    throw std::invalid_argument("semiparametric_fit_eps: eps must be >= 0");
  const std::size_t n = kernel.n();
  for (std::size_t idx : obs.mask.indices)
    if (idx >= n) throw DimensionMismatch("semiparametric: mask exceeds n");
  const Eigen::MatrixXd b_bar = detail::masked_basis(basis, obs, n);
  const Eigen::MatrixXd k_bar = mask_ops::select_block(kernel.k, obs.mask);
  const Eigen::Index s = b_bar.rows();
  const Eigen::Index m = b_bar.cols();
  const double s_d = static_cast<double>(s);

  // Saddle-point system for the minimal kernel penalty reaching a fitted
  // vector w: [K_bar/(2mu), B_bar; B_bar', 0] [nu; beta] = [w; 0], with
  // alpha = nu/(2mu) and penalty value w'nu/2.
  Eigen::MatrixXd saddle = Eigen::MatrixXd::Zero(s + m, s + m);
  saddle.topLeftCorner(s, s) = k_bar / (2.0 * mu);
  saddle.topRightCorner(s, m) = b_bar;
  saddle.bottomLeftCorner(m, s) = b_bar.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(saddle);
  if (!lu.isInvertible()) {
    const double jitter =
        kSolveJitterRel * k_bar.trace() / std::max<double>(1.0, s_d);
    saddle.topLeftCorner(s, s).diagonal().array() += jitter / (2.0 * mu);
    lu.compute(saddle);
    if (!lu.isInvertible())
      throw SingularSystem("eps-insensitive saddle-point system is singular");
  }

  // h: penalty Hessian, q*(w) = w' h w / 2; also the gradient map w -> nu.
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(s + m, s);
  rhs.topRows(s).setIdentity();
  Eigen::MatrixXd h = lu.solve(rhs).topRows(s);
  h = linalg::symmetrize(h);
  const double lips = std::max(linalg::sym_eig(h).values.maxCoeff(), 0.0);
  const double step = 1.0 / std::max(lips, 1e-12);

  const auto smooth_grad = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return -(h * (obs.y - u));
  };
  const auto objective = [&](const Eigen::VectorXd& u) -> double {
    const Eigen::VectorXd w = obs.y - u;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i)
      loss += std::max(0.0, std::abs(u[i]) - eps);
    return loss / s_d + 0.5 * w.dot(h * w);
  };

  // Warm start at the residual of the unpenalized basis fit.
  const Eigen::LLT<Eigen::MatrixXd> gram_llt(b_bar.transpose() * b_bar);
  Eigen::VectorXd u =
      obs.y - b_bar * gram_llt.solve(b_bar.transpose() * obs.y);

  SemiparametricFit fit;
  double f_u = objective(u);
  fit.objective_trace.push_back(f_u);
  Eigen::VectorXd u_prev = u;
  Eigen::VectorXd extra = u;  // extrapolation point
  double theta = 1.0;
  bool converged = false;
  std::size_t iter = 0;
  const double shift = step / s_d;
  for (; iter < max_iters; ++iter) {
    const Eigen::VectorXd cand =
        detail::tube_prox(extra - step * smooth_grad(extra), eps, shift);
    const double f_cand = objective(cand);
    u_prev = u;
    if (f_cand <= f_u) {  // monotone acceleration: keep the better iterate
      u = cand;
      f_u = f_cand;
    }
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    extra = u + (theta / theta_next) * (cand - u) +
            ((theta - 1.0) / theta_next) * (u - u_prev);
    theta = theta_next;
    fit.objective_trace.push_back(f_u);

    const Eigen::VectorXd mapped =
        detail::tube_prox(u - step * smooth_grad(u), eps, shift);
    if ((u - mapped).norm() / step <= kkt_tol) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (!converged)
    throw SolverDidNotConverge("eps-insensitive proximal gradient", max_iters);

  Eigen::VectorXd full_rhs = Eigen::VectorXd::Zero(s + m);
  full_rhs.head(s) = obs.y - u;
  const Eigen::VectorXd sol = lu.solve(full_rhs);
  fit.alpha = sol.head(s) / (2.0 * mu);
  fit.beta = sol.tail(m);
  fit.f_hat =
      basis.b * fit.beta + mask_ops::select_cols(kernel.k, obs.mask) * fit.alpha;
  fit.objective = f_u;
  fit.iterations = iter;
  return fit;
}

}  // namespace graphkernel
