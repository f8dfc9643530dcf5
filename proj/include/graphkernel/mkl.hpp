#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "graphkernel/errors.hpp"
#include "graphkernel/kernels.hpp"
#include "graphkernel/linalg.hpp"
#include "graphkernel/observation.hpp"

namespace graphkernel {

struct MklSolverConfig {
  double rho_admm = 1.0;        // initial ADMM penalty
  std::size_t max_iters = 20000;
  double tol_primal = 1e-8;
  double tol_dual = 1e-8;
  std::size_t alt_min_rounds = 200;  // alternating rounds (combination fit)
  double rho_theta = 1e-3;           // ridge on the combination weights
  bool record_trace = false;
};

struct GroupCoefficients {
  std::vector<Eigen::VectorXd> z;      // per-kernel group variables (S each)
  std::vector<Eigen::VectorXd> alpha;  // per-kernel expansion coefficients
  std::vector<double> group_norms;     // ||z_m||_2

  std::vector<std::size_t> active_set(double tol = 1e-8) const {
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < group_norms.size(); ++m)
      if (group_norms[m] > tol) out.push_back(m);
    return out;
  }
};

struct MklTraceRow {
  std::size_t iter;
  double objective;
  double primal_residual;
  double dual_residual;
  double rho;
};

struct SuperpositionFit {
  GroupCoefficients coeffs;
  Eigen::VectorXd f_hat;
  bool converged = false;
  std::size_t iterations = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  std::vector<MklTraceRow> trace;
};

/// Sparse superposition of per-kernel components:
/// min over {z_m} of (1/S)||y - sum_m Kbar_m^{1/2} z_m||^2 + mu sum_m ||z_m||.
///
/// ADMM with consensus splitting; the coupled quadratic update reduces to one
/// S x S solve through the push-through identity, so the per-iteration cost is
/// O(M S^2). Group sparsity comes out exact from the block soft threshold.
inline SuperpositionFit rkhs_superposition_fit(const KernelDictionary& dict,
                                               const Observation& obs,
                                               double mu,
                                               const MklSolverConfig& cfg = {}) {
  if (!(mu > 0.0))
    throw std::invalid_argument("rkhs_superposition_fit: mu must be > 0");
  if (!(cfg.rho_admm > 0.0))
    throw std::invalid_argument("rkhs_superposition_fit: rho must be > 0");
  const std::size_t n = dict.n();
  const std::size_t n_kernels = dict.size();
  for (std::size_t idx : obs.mask.indices)
    if (idx >= n) throw DimensionMismatch("superposition: mask exceeds n");
  const Eigen::Index s = static_cast<Eigen::Index>(obs.mask.size());
  const double s_d = static_cast<double>(s);

  SuperpositionFit fit;
  if (s == 0) {
    fit.f_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t m = 0; m < n_kernels; ++m) {
      fit.coeffs.z.emplace_back(Eigen::VectorXd(0));
      fit.coeffs.alpha.emplace_back(Eigen::VectorXd(0));
      fit.coeffs.group_norms.push_back(0.0);
    }
    fit.converged = true;
    return fit;
  }

  std::vector<Eigen::MatrixXd> k_bar(n_kernels), root(n_kernels);
  Eigen::MatrixXd k_bar_sum = Eigen::MatrixXd::Zero(s, s);
  for (std::size_t m = 0; m < n_kernels; ++m) {
    k_bar[m] = mask_ops::select_block(dict.members[m].k, obs.mask);
    root[m] = linalg::sqrt_psd(k_bar[m]);
    k_bar_sum += k_bar[m];
  }

  double rho = cfg.rho_admm;
  const auto factor_gate = [&](double rho_now) {
    Eigen::MatrixXd gate = (2.0 / s_d) * k_bar_sum;
    gate.diagonal().array() += rho_now;
    Eigen::LLT<Eigen::MatrixXd> llt(gate);
    if (llt.info() != Eigen::Success)
      throw SingularSystem("superposition gate matrix not positive definite");
    return llt;
  };
  Eigen::LLT<Eigen::MatrixXd> gate = factor_gate(rho);

  const auto apply_a = [&](const std::vector<Eigen::VectorXd>& blocks) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(s);
    for (std::size_t m = 0; m < n_kernels; ++m) out += root[m] * blocks[m];
    return out;
  };
  const auto objective_at = [&](const std::vector<Eigen::VectorXd>& w) {
    double val = (obs.y - apply_a(w)).squaredNorm() / s_d;
    for (std::size_t m = 0; m < n_kernels; ++m) val += mu * w[m].norm();
    return val;
  };

  std::vector<Eigen::VectorXd> z(n_kernels, Eigen::VectorXd::Zero(s));
  std::vector<Eigen::VectorXd> w = z, u = z, w_prev = z, w_best = z;
  double best_obj = objective_at(w);
  double primal = 0.0, dual = 0.0;
  std::size_t iter = 0;
  bool converged = false;

  for (; iter < cfg.max_iters; ++iter) {
    // z-update: (rho I + (2/S) A'A) Z = (2/S) A'y + rho (W - U)
    std::vector<Eigen::VectorXd> v(n_kernels);
    for (std::size_t m = 0; m < n_kernels; ++m)
      v[m] = (2.0 / s_d) * (root[m] * obs.y) + rho * (w[m] - u[m]);
    const Eigen::VectorXd gated = gate.solve(apply_a(v));
    for (std::size_t m = 0; m < n_kernels; ++m)
      z[m] = (v[m] - (2.0 / s_d) * (root[m] * gated)) / rho;

    // w-update: block soft threshold at mu/rho
    w_prev = w;
    for (std::size_t m = 0; m < n_kernels; ++m) {
      const Eigen::VectorXd t = z[m] + u[m];
      const double norm = t.norm();
      const double scale = norm > mu / rho ? 1.0 - (mu / rho) / norm : 0.0;
      w[m] = scale * t;
    }
    for (std::size_t m = 0; m < n_kernels; ++m) u[m] += z[m] - w[m];

    double pr2 = 0.0, du2 = 0.0;
    for (std::size_t m = 0; m < n_kernels; ++m) {
      pr2 += (z[m] - w[m]).squaredNorm();
      du2 += (w[m] - w_prev[m]).squaredNorm();
    }
    primal = std::sqrt(pr2);
    dual = rho * std::sqrt(du2);

    const double obj = objective_at(w);
    if (obj < best_obj) {
      best_obj = obj;
      w_best = w;
    }
    if (cfg.record_trace)
      fit.trace.push_back(MklTraceRow{iter, obj, primal, dual, rho});

    if (primal <= cfg.tol_primal && dual <= cfg.tol_dual) {
      converged = true;
      ++iter;
      break;
    }

    // residual balancing keeps the two tolerances commensurate
    if (primal > 10.0 * dual) {
      rho *= 2.0;
      for (auto& um : u) um /= 2.0;
      gate = factor_gate(rho);
    } else if (dual > 10.0 * primal) {
      rho /= 2.0;
      for (auto& um : u) um *= 2.0;
      gate = factor_gate(rho);
    }
  }

  const std::vector<Eigen::VectorXd>& w_out = converged ? w : w_best;
  fit.converged = converged;
  fit.iterations = iter;
  fit.primal_residual = primal;
  fit.dual_residual = dual;
  fit.objective = objective_at(w_out);

  fit.f_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t m = 0; m < n_kernels; ++m) {
    const Eigen::VectorXd alpha_m = linalg::pinv_sqrt_psd(k_bar[m]) * w_out[m];
    fit.coeffs.z.push_back(w_out[m]);
    fit.coeffs.alpha.push_back(alpha_m);
    fit.coeffs.group_norms.push_back(w_out[m].norm());
    fit.f_hat += mask_ops::select_cols(dict.members[m].k, obs.mask) * alpha_m;
  }
  return fit;
}

struct CombinationFit {
  Eigen::VectorXd theta;
  Eigen::VectorXd alpha;
  Eigen::VectorXd f_hat;
  double objective = 0.0;
  std::vector<double> objective_trace;  // after every half step
  std::size_t rounds = 0;
};

/// Convex-combination weights and expansion coefficients by exact alternating
/// minimization of
/// (1/S)||y - Kbar(theta) a||^2 + mu a'Kbar(theta)a + rho_theta ||theta||^2
/// over a (closed form) and theta >= 0 (projected gradient with Armijo line
/// search). Each half step is an exact minimization, so the joint objective
/// never increases.
inline CombinationFit kernel_combination_fit(const KernelDictionary& dict,
                                             const Observation& obs, double mu,
                                             const MklSolverConfig& cfg = {}) {
  if (!(mu > 0.0))
    throw std::invalid_argument("kernel_combination_fit: mu must be > 0");
  const std::size_t n = dict.n();
  const std::size_t n_kernels = dict.size();
  for (std::size_t idx : obs.mask.indices)
    if (idx >= n) throw DimensionMismatch("combination: mask exceeds n");
  const Eigen::Index s = static_cast<Eigen::Index>(obs.mask.size());
  const double s_d = static_cast<double>(s);
  if (s == 0) {
    CombinationFit fit;
    fit.theta = Eigen::VectorXd::Constant(
        static_cast<Eigen::Index>(n_kernels), 1.0 / static_cast<double>(n_kernels));
    fit.alpha = Eigen::VectorXd(0);
    fit.f_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    return fit;
  }

  std::vector<Eigen::MatrixXd> k_bar(n_kernels);
  for (std::size_t m = 0; m < n_kernels; ++m)
    k_bar[m] = mask_ops::select_block(dict.members[m].k, obs.mask);

  Eigen::VectorXd theta = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(n_kernels), 1.0 / static_cast<double>(n_kernels));
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(s);

  CombinationFit fit;
  double last = std::numeric_limits<double>::infinity();
  std::size_t round = 0;
  for (; round < cfg.alt_min_rounds; ++round) {
    Eigen::MatrixXd k_theta = Eigen::MatrixXd::Zero(s, s);
    for (std::size_t m = 0; m < n_kernels; ++m) k_theta += theta[m] * k_bar[m];
    Eigen::MatrixXd sys = k_theta;
    sys.diagonal().array() += mu * s_d;
    alpha = linalg::solve_spd(sys, obs.y);

    const auto joint = [&](const Eigen::VectorXd& th) {
      Eigen::VectorXd fitv = Eigen::VectorXd::Zero(s);
      double penalty = 0.0;
      for (std::size_t m = 0; m < n_kernels; ++m) {
        const Eigen::VectorXd km_a = k_bar[m] * alpha;
        fitv += th[m] * km_a;
        penalty += th[m] * alpha.dot(km_a);
      }
      return (obs.y - fitv).squaredNorm() / s_d + mu * penalty +
             cfg.rho_theta * th.squaredNorm();
    };
    fit.objective_trace.push_back(joint(theta));

    // theta step over the nonnegative orthant
    Eigen::MatrixXd c(s, static_cast<Eigen::Index>(n_kernels));
    Eigen::VectorXd d(static_cast<Eigen::Index>(n_kernels));
    for (std::size_t m = 0; m < n_kernels; ++m) {
      c.col(static_cast<Eigen::Index>(m)) = k_bar[m] * alpha;
      d[static_cast<Eigen::Index>(m)] =
          alpha.dot(c.col(static_cast<Eigen::Index>(m)));
    }
    const auto phi = [&](const Eigen::VectorXd& th) {
      return (obs.y - c * th).squaredNorm() / s_d + mu * d.dot(th) +
             cfg.rho_theta * th.squaredNorm();
    };
    const auto grad = [&](const Eigen::VectorXd& th) -> Eigen::VectorXd {
      return (2.0 / s_d) * (c.transpose() * (c * th - obs.y)) + mu * d +
             2.0 * cfg.rho_theta * th;
    };
    double val = phi(theta);
    for (std::size_t inner = 0; inner < 10000; ++inner) {
      const Eigen::VectorXd g = grad(theta);
      if ((theta - (theta - g).cwiseMax(0.0)).norm() <= 1e-8) break;
      double step = 1.0;
      bool moved = false;
      for (int half = 0; half < 60; ++half) {
        const Eigen::VectorXd cand = (theta - step * g).cwiseMax(0.0);
        const double cand_val = phi(cand);
        if (cand_val <= val + 1e-4 * g.dot(cand - theta)) {
          theta = cand;
          val = cand_val;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    fit.objective_trace.push_back(val);

    if (std::abs(last - val) <= 1e-8 * std::max(1.0, std::abs(val))) {
      last = val;
      ++round;
      break;
    }
    last = val;
  }

  // refresh the coefficients at the final weights so the returned pair is a
  // joint stationary point; an exact half step can only lower the objective
  {
    Eigen::MatrixXd k_theta = Eigen::MatrixXd::Zero(s, s);
    for (std::size_t m = 0; m < n_kernels; ++m) k_theta += theta[m] * k_bar[m];
    Eigen::MatrixXd sys = k_theta;
    sys.diagonal().array() += mu * s_d;
    alpha = linalg::solve_spd(sys, obs.y);
    const Eigen::VectorXd fitv = k_theta * alpha;
    last = (obs.y - fitv).squaredNorm() / s_d + mu * alpha.dot(fitv) +
           cfg.rho_theta * theta.squaredNorm();
    fit.objective_trace.push_back(last);
  }

  fit.theta = theta;
  fit.alpha = alpha;
  fit.rounds = round;
  fit.objective = last;
  fit.f_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t m = 0; m < n_kernels; ++m)
    fit.f_hat += theta[static_cast<Eigen::Index>(m)] *
                 (mask_ops::select_cols(dict.members[m].k, obs.mask) * alpha);
  return fit;
}

}  // namespace graphkernel
