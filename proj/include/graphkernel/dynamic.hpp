#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "graphkernel/errors.hpp"
#include "graphkernel/estimators.hpp"
#include "graphkernel/kernels.hpp"
#include "graphkernel/linalg.hpp"
#include "graphkernel/observation.hpp"

namespace graphkernel {

/// Per-slot observations of a time-varying signal on a fixed vertex set.
/// Slots may be empty (no samples at that time).
struct TimeSeriesObservations {
  std::size_t n = 0;
  std::vector<Observation> slots;

  std::size_t t_len() const { return slots.size(); }
  std::size_t total_samples() const {
    std::size_t total = 0;
    for (const auto& slot : slots) total += slot.mask.size();
    return total;
  }
};

inline TimeSeriesObservations make_time_series(std::size_t n,
                                               std::vector<Observation> slots) {
  if (slots.empty()) throw DimensionMismatch("time series needs >= 1 slot");
  for (const auto& slot : slots)
    for (std::size_t idx : slot.mask.indices)
      if (idx >= n)
        throw DimensionMismatch("time series mask index exceeds n");
  return TimeSeriesObservations{n, std::move(slots)};
}

/// Memoryless per-slot estimate: plain kernel ridge on the current slot only.
inline Eigen::VectorXd instantaneous_estimate(const KernelMatrix& kernel,
                                              const Observation& obs,
                                              double mu,
                                              std::size_t slot_index = 0) {
  if (obs.mask.size() == 0) throw EmptySlot(slot_index);
  return krr_fit(kernel, obs, mu).f_hat;
}

namespace detail {

/// Flattened sample coordinates over the space-time grid, with the per-sample
/// regularizer weights S_t.
struct FlatSamples {
  std::vector<std::size_t> global;  // index t*n + vertex, ascending
  Eigen::VectorXd y;
  Eigen::VectorXd slot_sizes;  // S_t of the slot each sample came from
};

inline FlatSamples flatten(const TimeSeriesObservations& obs,
                           std::size_t t_incl) {
  FlatSamples flat;
  std::vector<double> y, sizes;
  for (std::size_t t = 0; t < t_incl; ++t) {
    const Observation& slot = obs.slots[t];
    for (std::size_t s = 0; s < slot.mask.size(); ++s) {
      flat.global.push_back(t * obs.n + slot.mask.indices[s]);
      y.push_back(slot.y[static_cast<Eigen::Index>(s)]);
      sizes.push_back(static_cast<double>(slot.mask.size()));
    }
  }
  flat.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  flat.slot_sizes = Eigen::Map<Eigen::VectorXd>(
      sizes.data(), static_cast<Eigen::Index>(sizes.size()));
  return flat;
}

}  // namespace detail

/// Ridge regression over the whole space-time grid with a kernel on the
/// extended graph. Empty slots simply contribute no rows. The regularizer
/// weights each sample by the size of its slot, matching the per-slot
/// averaged loss.
inline Eigen::VectorXd batch_space_time_fit(const KernelMatrix& kernel_ext,
                                            const TimeSeriesObservations& obs,
                                            double mu) {
  if (!(mu > 0.0))
    throw std::invalid_argument("batch_space_time_fit: mu must be > 0");
  const std::size_t nt = kernel_ext.n();
  if (nt != obs.n * obs.t_len())
    throw DimensionMismatch("extended kernel size vs n*T");
  const auto flat = detail::flatten(obs, obs.t_len());
  if (flat.global.empty())
    return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nt));

  SamplingMask mask{flat.global};
  Eigen::MatrixXd a = mask_ops::select_block(kernel_ext.k, mask);
  a.diagonal() += mu * flat.slot_sizes;
  const Eigen::VectorXd alpha = linalg::solve_spd(a, flat.y);
  return mask_ops::select_cols(kernel_ext.k, mask) * alpha;
}

/// Batch space-time fit truncated to the slots up to and including
/// `t_incl` (1-based); returns the estimate for every slot of the grid.
/// Block t of the result, for t <= t_incl, is the causal estimate given data
/// up to t_incl.
inline std::vector<Eigen::VectorXd> online_krr_oracle(
    const KernelMatrix& kernel_ext, const TimeSeriesObservations& obs,
    std::size_t t_incl, double mu) {
  if (t_incl < 1 || t_incl > obs.t_len())
    throw std::invalid_argument("online_krr_oracle: t_incl out of range");
  const std::size_t nt = kernel_ext.n();
  if (nt != obs.n * obs.t_len())
    throw DimensionMismatch("extended kernel size vs n*T");
  const auto flat = detail::flatten(obs, t_incl);
  Eigen::VectorXd f_hat;
  if (flat.global.empty()) {
    f_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nt));
  } else {
    SamplingMask mask{flat.global};
    Eigen::MatrixXd a = mask_ops::select_block(kernel_ext.k, mask);
    a.diagonal() += mu * flat.slot_sizes;
    const Eigen::VectorXd alpha = linalg::solve_spd(a, flat.y);
    f_hat = mask_ops::select_cols(kernel_ext.k, mask) * alpha;
  }
  std::vector<Eigen::VectorXd> blocks;
  blocks.reserve(obs.t_len());
  for (std::size_t t = 0; t < obs.t_len(); ++t)
    blocks.push_back(f_hat.segment(static_cast<Eigen::Index>(t * obs.n),
                                   static_cast<Eigen::Index>(obs.n)));
  return blocks;
}

/// Filtered sequence from the batch oracle: entry t is block t of the fit on
/// data up to slot t. Quadratic in T; reference implementation for tests.
inline std::vector<Eigen::VectorXd> online_krr_filtered(
    const KernelMatrix& kernel_ext, const TimeSeriesObservations& obs,
    double mu) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(obs.t_len());
  for (std::size_t t = 1; t <= obs.t_len(); ++t)
    out.push_back(online_krr_oracle(kernel_ext, obs, t, mu)[t - 1]);
  return out;
}

/// State-space form of a block-tridiagonal inverse kernel: transitions P(t)
/// and innovation covariances Q(t) such that the chain
/// f(t) = P(t) f(t-1) + eta(t), eta(t) ~ (0, Q(t)), f(1) ~ (0, Q(1))
/// has precisely the given block-tridiagonal precision matrix.
struct KkfParameters {
  std::size_t n = 0;
  std::vector<Eigen::MatrixXd> p;  // P(2..T); p[t-2] applies at slot t
  std::vector<Eigen::MatrixXd> q;  // Q(1..T); q[t-1]

  std::size_t t_len() const { return q.size(); }
};

/// Backward factorization of a block-tridiagonal precision matrix into chain
/// transitions and innovation covariances.
inline KkfParameters kkf_parameters(const BlockTridiagonalMatrix& inv) {
  const std::size_t t_len = inv.t_len;
  const Eigen::Index n = static_cast<Eigen::Index>(inv.n);
  KkfParameters params;
  params.n = inv.n;
  params.p.assign(t_len >= 1 ? t_len - 1 : 0, Eigen::MatrixXd());
  params.q.assign(t_len, Eigen::MatrixXd());

  const auto invert_spd = [&](const Eigen::MatrixXd& a, std::size_t t) {
    Eigen::LLT<Eigen::MatrixXd> llt(linalg::symmetrize(a));
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("precision block at slot " + std::to_string(t));
    return llt.solve(Eigen::MatrixXd::Identity(n, n)).eval();
  };

  Eigen::MatrixXd q_inv = inv.diag_blocks[t_len - 1];
  for (std::size_t t = t_len; t >= 2; --t) {
    const Eigen::MatrixXd q_t = invert_spd(q_inv, t);
    const Eigen::MatrixXd& e_t = inv.off_blocks[t - 2];
    params.q[t - 1] = linalg::symmetrize(q_t);
    params.p[t - 2] = -(q_t * e_t);
    q_inv = inv.diag_blocks[t - 2] -
            params.p[t - 2].transpose() * (q_inv * params.p[t - 2]);
  }
  params.q[0] = linalg::symmetrize(invert_spd(q_inv, 1));
  return params;
}

struct KkfState {
  std::size_t t = 0;           // 1-based slot
  Eigen::VectorXd f_hat;       // filtered estimate f(t|t)
  Eigen::MatrixXd error_cov;   // M(t|t)
};

/// Kalman filter over the chain produced by `kkf_parameters`. Per-slot noise
/// variances come from the caller (mu * S_t reproduces the ridge estimate).
/// Empty slots perform the prediction step only.
inline std::vector<KkfState> kkf_run(const KkfParameters& params,
                                     const TimeSeriesObservations& obs,
                                     const Eigen::VectorXd& sigma2) {
  const std::size_t t_len = params.t_len();
  const Eigen::Index n = static_cast<Eigen::Index>(params.n);
  if (obs.t_len() != t_len || obs.n != params.n)
    throw DimensionMismatch("kkf_run: observations vs parameters");
  if (static_cast<std::size_t>(sigma2.size()) != t_len)
    throw DimensionMismatch("kkf_run: sigma2 length vs T");

  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  std::vector<KkfState> states;
  states.reserve(t_len);

  for (std::size_t t = 1; t <= t_len; ++t) {
    // predict; P(1) = 0 collapses the first prediction onto the prior Q(1)
    if (t == 1) {
      f.setZero();
      cov = params.q[0];
    } else {
      const Eigen::MatrixXd& p_t = params.p[t - 2];
      f = p_t * f;
      cov = linalg::symmetrize(p_t * cov * p_t.transpose() + params.q[t - 1]);
    }

    const Observation& slot = obs.slots[t - 1];
    const std::size_t s = slot.mask.size();
    if (s > 0) {
      if (!(sigma2[static_cast<Eigen::Index>(t - 1)] > 0.0))
        throw std::invalid_argument("kkf_run: sigma2 must be > 0 on sampled slots");
      Eigen::MatrixXd innov = mask_ops::select_block(cov, slot.mask);
      innov.diagonal().array() += sigma2[static_cast<Eigen::Index>(t - 1)];
      Eigen::LLT<Eigen::MatrixXd> llt(innov);
      if (llt.info() != Eigen::Success) throw SingularInnovation(t);
      const Eigen::MatrixXd cov_rows = mask_ops::select_rows(cov, slot.mask);
      const Eigen::MatrixXd gain = llt.solve(cov_rows).transpose();
      f += gain * (slot.y - mask_ops::select(f, slot.mask));
      cov = linalg::symmetrize(cov - gain * cov_rows);
    }
    states.push_back(KkfState{t, f, cov});
  }
  return states;
}

}  // namespace graphkernel
