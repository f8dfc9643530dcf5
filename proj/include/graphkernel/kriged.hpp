#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "graphkernel/dynamic.hpp"
#include "graphkernel/errors.hpp"
#include "graphkernel/kernels.hpp"
#include "graphkernel/linalg.hpp"
#include "graphkernel/observation.hpp"

namespace graphkernel {

/// Converts a structural VAR step, x(t) = A_tt x(t) + A_prev x(t-1) + e, to
/// its reduced form x(t) = (I - A_tt)^{-1} A_prev x(t-1) + ...
inline Eigen::MatrixXd svarm_to_varm(const Eigen::MatrixXd& a_tt,
                                     const Eigen::MatrixXd& a_prev) {
  if (a_tt.rows() != a_tt.cols() || a_prev.rows() != a_prev.cols() ||
      a_tt.rows() != a_prev.rows())
    throw DimensionMismatch("svarm_to_varm: square blocks of equal size");
  const Eigen::MatrixXd lhs =
      Eigen::MatrixXd::Identity(a_tt.rows(), a_tt.cols()) - a_tt;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
  if (!lu.isInvertible()) throw SingularInstantaneous();
  return lu.solve(a_prev);
}

/// Trend-plus-residual state model: the trend follows the transition with
/// innovation kernel `kernel_eta` (weight mu1); the residual is re-estimated
/// per slot from the spatial kernel `kernel_nu` (weight mu2).
struct SpatioTemporalModel {
  Eigen::MatrixXd transition;                    // A(t, t-1)
  std::optional<Eigen::MatrixXd> instantaneous;  // A(t, t), structural form
  KernelMatrix kernel_nu;
  KernelMatrix kernel_eta;
  double mu1 = 1.0;
  double mu2 = 1.0;
};

inline Eigen::MatrixXd effective_transition(const SpatioTemporalModel& model) {
  if (model.instantaneous)
    return svarm_to_varm(*model.instantaneous, model.transition);
  return model.transition;
}

struct KrigedState {
  std::size_t t = 0;          // 1-based slot
  Eigen::VectorXd f_chi;      // filtered trend estimate
  Eigen::VectorXd f_nu;       // kriged residual estimate
  Eigen::MatrixXd error_cov;  // trend error covariance M(t|t)
};

inline KrigedState kekrikf_initial_state(std::size_t n) {
  KrigedState state;
  state.t = 0;
  state.f_chi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  state.f_nu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  state.error_cov =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                            static_cast<Eigen::Index>(n));
  return state;
}

/// One predict/correct/krige step. The Kalman part tracks the trend; the
/// kriging part explains the current innovation through the spatial kernel:
/// f_nu = (1/mu2) K_nu Phi' Kbar^{-1} (y - Phi f_chi(t|t)) with
/// Kbar = (1/mu2) Phi K_nu Phi' + S_t I. An empty slot runs prediction only.
inline KrigedState kekrikf_step(const KrigedState& state,
                                const SpatioTemporalModel& model,
                                const Observation& obs) {
  const std::size_t n = model.kernel_nu.n();
  const Eigen::Index n_i = static_cast<Eigen::Index>(n);
  if (model.kernel_eta.n() != n ||
      static_cast<std::size_t>(model.transition.rows()) != n ||
      model.transition.rows() != model.transition.cols())
    throw DimensionMismatch("kekrikf_step: model pieces disagree on n");
  if (static_cast<std::size_t>(state.f_chi.size()) != n)
    throw DimensionMismatch("kekrikf_step: state size vs model");
  if (!(model.mu1 > 0.0) || !(model.mu2 > 0.0))
    throw std::invalid_argument("kekrikf_step: mu1, mu2 must be > 0");
  for (std::size_t idx : obs.mask.indices)
    if (idx >= n) throw DimensionMismatch("kekrikf_step: mask exceeds n");

  const Eigen::MatrixXd a = effective_transition(model);
  const std::size_t t_next = state.t + 1;

  KrigedState next;
  next.t = t_next;
  next.f_chi = a * state.f_chi;
  Eigen::MatrixXd cov = linalg::symmetrize(
      a * state.error_cov * a.transpose() + model.kernel_eta.k / model.mu1);

  const std::size_t s = obs.mask.size();
  if (s == 0) {
    next.f_nu = Eigen::VectorXd::Zero(n_i);
    next.error_cov = cov;
    return next;
  }

  Eigen::MatrixXd k_bar =
      mask_ops::select_block(model.kernel_nu.k, obs.mask) / model.mu2;
  k_bar.diagonal().array() += static_cast<double>(s);

  Eigen::MatrixXd innov = k_bar + mask_ops::select_block(cov, obs.mask);
  Eigen::LLT<Eigen::MatrixXd> innov_llt(innov);
  if (innov_llt.info() != Eigen::Success) throw SingularInnovation(t_next);
  const Eigen::MatrixXd cov_rows = mask_ops::select_rows(cov, obs.mask);
  const Eigen::MatrixXd gain = innov_llt.solve(cov_rows).transpose();
  next.f_chi += gain * (obs.y - mask_ops::select(next.f_chi, obs.mask));
  next.error_cov = linalg::symmetrize(cov - gain * cov_rows);

  Eigen::LLT<Eigen::MatrixXd> k_bar_llt(k_bar);
  if (k_bar_llt.info() != Eigen::Success) throw SingularInnovation(t_next);
  const Eigen::VectorXd resid = obs.y - mask_ops::select(next.f_chi, obs.mask);
  next.f_nu = mask_ops::select_cols(model.kernel_nu.k, obs.mask) *
              k_bar_llt.solve(resid) / model.mu2;
  return next;
}

/// Running sufficient statistics of a sample of vectors for the quadratic
/// form x' K(theta)^{-1} x: either the summed outer product, or, when every
/// dictionary member shares one eigenbasis, just the summed squared spectral
/// coefficients.
struct QuadFormStats {
  std::size_t count = 0;
  bool shared = false;
  Eigen::MatrixXd outer;     // sum x x' (generic path)
  Eigen::VectorXd spectral;  // sum (U'x).^2 (shared path)
};

inline QuadFormStats make_quad_form_stats(const KernelDictionary& dict) {
  QuadFormStats stats;
  stats.shared = dict.shared.has_value();
  const Eigen::Index n = static_cast<Eigen::Index>(dict.n());
  if (stats.shared)
    stats.spectral = Eigen::VectorXd::Zero(n);
  else
    stats.outer = Eigen::MatrixXd::Zero(n, n);
  return stats;
}

inline void accumulate(QuadFormStats& stats, const Eigen::VectorXd& x,
                       const KernelDictionary& dict) {
  if (static_cast<std::size_t>(x.size()) != dict.n())
    throw DimensionMismatch("quad-form stats: vector length vs dictionary");
  if (stats.shared) {
    const Eigen::VectorXd coeff =
        dict.shared->decomp.eigenvectors.transpose() * x;
    stats.spectral += coeff.array().square().matrix();
  } else {
    stats.outer += x * x.transpose();
  }
  ++stats.count;
}

struct ThetaSolveOptions {
  double tol = 1e-6;            // projected-gradient stationarity
  std::size_t max_iters = 5000;
  double init_step = 1.0;
  double armijo = 1e-4;
};

struct ThetaSolveResult {
  Eigen::VectorXd theta;
  double objective = 0.0;
  std::size_t iterations = 0;
  double proj_grad_norm = 0.0;
};

namespace detail {

struct ThetaObjective {
  double value;
  Eigen::VectorXd grad;
};

/// (1/count) tr(K(theta)^{-1} W) + ridge ||theta||^2 and its gradient,
/// through the dense path. A singular combination gets one spectral-floor
/// retry before failing.
inline ThetaObjective theta_eval_dense(const Eigen::VectorXd& theta,
                                       const KernelDictionary& dict,
                                       const QuadFormStats& stats,
                                       double ridge, bool want_grad) {
  const Eigen::Index n = static_cast<Eigen::Index>(dict.n());
  const double count = static_cast<double>(stats.count);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t m = 0; m < dict.size(); ++m)
    k += theta[static_cast<Eigen::Index>(m)] * dict.members[m].k;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    if (!(k.trace() > 0.0))
      throw SingularCombination("combined kernel is zero");
    k.diagonal().array() += 1e-10 * k.trace() / static_cast<double>(n);
    llt.compute(k);
    if (llt.info() != Eigen::Success)
      throw SingularCombination("combined kernel not positive definite");
  }
  const Eigen::MatrixXd x = llt.solve(stats.outer);
  ThetaObjective out;
  out.value = x.trace() / count + ridge * theta.squaredNorm();
  if (want_grad) {
    out.grad.resize(static_cast<Eigen::Index>(dict.size()));
    for (std::size_t m = 0; m < dict.size(); ++m) {
      const Eigen::MatrixXd y = llt.solve(dict.members[m].k);
      out.grad[static_cast<Eigen::Index>(m)] =
          -(y * x).trace() / count +
          2.0 * ridge * theta[static_cast<Eigen::Index>(m)];
    }
  }
  return out;
}

/// Same objective when all members share an eigenbasis: kappa = E theta and
/// the trace collapses to sum_i s_i / kappa_i. Linear in n.
inline ThetaObjective theta_eval_shared(const Eigen::VectorXd& theta,
                                        const KernelDictionary& dict,
                                        const QuadFormStats& stats,
                                        double ridge, bool want_grad) {
  const Eigen::MatrixXd& eigs = dict.shared->member_eigenvalues;
  const double count = static_cast<double>(stats.count);
  Eigen::VectorXd kappa = eigs * theta;
  if (kappa.minCoeff() <= 0.0) {
    const double total = kappa.sum();
    if (!(total > 0.0)) throw SingularCombination("combined kernel is zero");
    const double floor = 1e-10 * total / static_cast<double>(kappa.size());
    kappa.array() += floor;
    if (kappa.minCoeff() <= 0.0)
      throw SingularCombination("combined kernel not positive definite");
  }
  ThetaObjective out;
  out.value = (stats.spectral.array() / kappa.array()).sum() / count +
              ridge * theta.squaredNorm();
  if (want_grad) {
    const Eigen::ArrayXd weight =
        stats.spectral.array() / kappa.array().square();
    out.grad = -(eigs.transpose() * weight.matrix()) / count +
               2.0 * ridge * theta;
  }
  return out;
}

inline ThetaObjective theta_eval(const Eigen::VectorXd& theta,
                                 const KernelDictionary& dict,
                                 const QuadFormStats& stats, double ridge,
                                 bool want_grad) {
  return stats.shared ? theta_eval_shared(theta, dict, stats, ridge, want_grad)
                      : theta_eval_dense(theta, dict, stats, ridge, want_grad);
}

}  // namespace detail

/// Minimizes (1/count) * [quadratic-form data term] + ridge ||theta||^2 over
/// theta >= 0 by projected gradient with Armijo backtracking. A history of
/// zero vectors drops the data term, so the minimizer is theta = 0 and no
/// kernel combination is ever inverted.
inline ThetaSolveResult solve_theta(const QuadFormStats& stats,
                                    const KernelDictionary& dict, double ridge,
                                    Eigen::VectorXd theta0,
                                    const ThetaSolveOptions& opts = {}) {
  if (stats.count == 0)
    throw std::invalid_argument("solve_theta: empty history");
  if (static_cast<std::size_t>(theta0.size()) != dict.size())
    throw DimensionMismatch("solve_theta: theta0 length vs dictionary");
  const bool zero_data = stats.shared ? stats.spectral.isZero(0.0)
                                      : stats.outer.isZero(0.0);

  const auto eval = [&](const Eigen::VectorXd& th,
                        bool want_grad) -> detail::ThetaObjective {
    if (zero_data) {
      detail::ThetaObjective out;
      out.value = ridge * th.squaredNorm();
      if (want_grad) out.grad = 2.0 * ridge * th;
      return out;
    }
    return detail::theta_eval(th, dict, stats, ridge, want_grad);
  };

  Eigen::VectorXd theta = theta0.cwiseMax(0.0);
  detail::ThetaObjective cur = eval(theta, true);
  ThetaSolveResult result;
  std::size_t iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    const Eigen::VectorXd mapped = (theta - cur.grad).cwiseMax(0.0);
    result.proj_grad_norm = (theta - mapped).norm();
    if (result.proj_grad_norm <= opts.tol) break;

    double step = opts.init_step;
    bool moved = false;
    for (int half = 0; half < 60; ++half) {
      const Eigen::VectorXd cand = (theta - step * cur.grad).cwiseMax(0.0);
      detail::ThetaObjective cand_obj = eval(cand, false);
      if (cand_obj.value <=
          cur.value + opts.armijo * cur.grad.dot(cand - theta)) {
        theta = cand;
        cur = eval(theta, true);
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // at line-search resolution; report the mapped norm
  }
  result.theta = theta;
  result.objective = cur.value;
  result.iterations = iter;
  return result;
}

/// Per-side adaptive state for the multi-kernel filter: current weights and
/// the running statistics of the vectors that drive them.
struct ThetaState {
  Eigen::VectorXd theta_nu;
  Eigen::VectorXd theta_eta;
  QuadFormStats stats_nu;
  QuadFormStats stats_eta;
};

inline ThetaState make_theta_state(const KernelDictionary& dict_nu,
                                   const KernelDictionary& dict_eta) {
  ThetaState state;
  state.theta_nu = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(dict_nu.size()),
      1.0 / static_cast<double>(dict_nu.size()));
  state.theta_eta = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(dict_eta.size()),
      1.0 / static_cast<double>(dict_eta.size()));
  state.stats_nu = make_quad_form_stats(dict_nu);
  state.stats_eta = make_quad_form_stats(dict_eta);
  return state;
}

/// Refreshes the spatial-kernel weights from the kriged residual history.
inline ThetaSolveResult theta_nu_update(ThetaState& state,
                                        const KernelDictionary& dict_nu,
                                        double rho_nu, double mu2,
                                        const ThetaSolveOptions& opts = {}) {
  ThetaSolveResult res =
      solve_theta(state.stats_nu, dict_nu, rho_nu / mu2, state.theta_nu, opts);
  state.theta_nu = res.theta;
  return res;
}

/// Refreshes the innovation-kernel weights from the trend increment history.
inline ThetaSolveResult theta_eta_update(ThetaState& state,
                                         const KernelDictionary& dict_eta,
                                         double rho_eta, double mu1,
                                         const ThetaSolveOptions& opts = {}) {
  ThetaSolveResult res = solve_theta(state.stats_eta, dict_eta, rho_eta / mu1,
                                     state.theta_eta, opts);
  state.theta_eta = res.theta;
  return res;
}

struct MkrikfOptions {
  std::size_t theta_rounds_per_slot = 1;
  ThetaSolveOptions theta;
};

struct MkrikfResult {
  std::vector<KrigedState> states;
  std::vector<Eigen::VectorXd> theta_nu;   // weights after each slot
  std::vector<Eigen::VectorXd> theta_eta;
};

/// Kriged Kalman filter with dictionary kernels whose weights adapt online.
/// Each slot filters with the current weights, folds the new filtered trend
/// increment and kriged residual into the running statistics, then refreshes
/// both weight vectors. Cost per slot does not grow with t.
inline MkrikfResult mkrikf_run(const TimeSeriesObservations& obs,
                               const KernelDictionary& dict_nu,
                               const KernelDictionary& dict_eta,
                               const Eigen::MatrixXd& transition, double mu1,
                               double mu2, double rho_nu, double rho_eta,
                               const MkrikfOptions& opts = {}) {
  const std::size_t n = dict_nu.n();
  if (dict_eta.n() != n || obs.n != n)
    throw DimensionMismatch("mkrikf_run: dictionary sizes vs observations");
  for (std::size_t t = 1; t < obs.t_len(); ++t)
    if (obs.slots[t].mask.indices != obs.slots[0].mask.indices)
      throw std::invalid_argument(
          "mkrikf_run: sampling mask must not change across slots");

  ThetaState theta = make_theta_state(dict_nu, dict_eta);
  KrigedState state = kekrikf_initial_state(n);
  MkrikfResult result;
  result.states.reserve(obs.t_len());

  for (std::size_t t = 0; t < obs.t_len(); ++t) {
    SpatioTemporalModel model;
    model.transition = transition;
    model.kernel_nu = combine(dict_nu, theta.theta_nu);
    model.kernel_eta = combine(dict_eta, theta.theta_eta);
    model.mu1 = mu1;
    model.mu2 = mu2;

    const Eigen::VectorXd prev_f_chi = state.f_chi;
    state = kekrikf_step(state, model, obs.slots[t]);

    accumulate(theta.stats_eta, state.f_chi - transition * prev_f_chi,
               dict_eta);
    accumulate(theta.stats_nu, state.f_nu, dict_nu);
    for (std::size_t round = 0; round < opts.theta_rounds_per_slot; ++round) {
      theta_nu_update(theta, dict_nu, rho_nu, mu2, opts.theta);
      theta_eta_update(theta, dict_eta, rho_eta, mu1, opts.theta);
    }

    result.states.push_back(state);
    result.theta_nu.push_back(theta.theta_nu);
    result.theta_eta.push_back(theta.theta_eta);
  }
  return result;
}

}  // namespace graphkernel
