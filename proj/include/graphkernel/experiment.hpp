#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "graphkernel/dynamic.hpp"
#include "graphkernel/errors.hpp"
#include "graphkernel/estimators.hpp"
#include "graphkernel/graph.hpp"
#include "graphkernel/harness.hpp"
#include "graphkernel/kernels.hpp"
#include "graphkernel/kriged.hpp"
#include "graphkernel/mkl.hpp"
#include "graphkernel/observation.hpp"
#include "graphkernel/rng.hpp"

namespace graphkernel {

struct EstimatorSpec {
  std::string id;  // krr | bl | lmmse | sp_square | sp_eps | mkl_rs | mkl_kc |
                   // ie | kkf | kekrikf | mkrikf
  std::vector<SpectralMapSpec> kernels;      // dictionary; single entry for
                                             // one-kernel estimators
  std::vector<SpectralMapSpec> kernels_eta;  // second dictionary (mkrikf)
  double mu = 1e-3;
  std::size_t bandwidth = 10;                // bl
  double eps = 0.1;                          // sp_eps
  std::optional<double> sigma_e2;            // lmmse; empty = true variance
  double mu1 = 1.0;                          // kriged filters
  double mu2 = 1.0;
  double rho_nu = 1e-2;                      // mkrikf weight priors
  double rho_eta = 1e-2;
  double coupling_alpha = 0.9;               // extended-graph coupling (kkf)
  double transition_alpha = 0.9;             // scaled-identity transition
  MklSolverConfig mkl;
};

struct ExperimentConfig {
  // graph: explicit adjacency wins over the generator
  std::optional<Graph> graph;
  std::size_t er_n = 100;
  double er_p = 0.2;

  // signal
  std::optional<Eigen::VectorXd> fixed_signal;
  std::size_t signal_eigs = 10;
  std::size_t signal_clusters = 6;

  // trajectory (dynamic estimators): spectral AR(1) over the leading basis
  std::size_t t_len = 1;
  double trend_coefficient = 0.9;

  // sampling
  std::size_t sample_count = 10;
  double snr_db = std::numeric_limits<double>::infinity();
  std::optional<OutlierSpec> outliers;

  EstimatorSpec estimator;

  std::uint64_t master_seed = 0;
  std::size_t trials = 1;
};

struct TrialResult {
  double nmse = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
  std::vector<double> per_slot;  // dynamic estimators only
};

struct EvaluationReport {
  std::string estimator_id;
  std::uint64_t master_seed = 0;
  std::size_t trials = 0;
  std::size_t failures = 0;
  std::vector<TrialResult> per_trial;  // ordered by trial index
  double mean_nmse = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> mean_per_slot;
  double runtime_seconds = 0.0;
};

inline std::size_t thread_budget() {
  std::size_t budget = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GRAPHKERNEL_THREADS")) {
    char* end = nullptr;
    const unsigned long parsed = std::strtoul(env, &end, 10);
    if (end != env && parsed > 0)
      budget = std::min<std::size_t>(budget, parsed);
  }
  return budget;
}

namespace detail {

inline bool is_dynamic_estimator(const std::string& id) {
  return id == "ie" || id == "kkf" || id == "kekrikf" || id == "mkrikf";
}

/// Pieces shared across trials of one experiment: they depend only on the
/// master seed, never on the trial index.
struct ExperimentContext {
  Graph graph;
  SpectralDecomposition decomp;
  Eigen::MatrixXd indicators;
  std::vector<KernelMatrix> kernels;
  std::vector<KernelMatrix> kernels_eta;
  KernelDictionary dict;
  KernelDictionary dict_eta;
  // kkf: chain form of the inverse extended kernel
  std::optional<KkfParameters> kkf_params;
  std::optional<KernelMatrix> kernel_ext;
};

inline ExperimentContext prepare_context(const ExperimentConfig& cfg) {
  ExperimentContext ctx;
  Rng master(cfg.master_seed);
  ctx.graph = cfg.graph ? *cfg.graph
                        : generate_er_graph(cfg.er_n, cfg.er_p,
                                            master.substream(0).seed());
  ctx.decomp = eigendecompose(laplacian(ctx.graph));
  const EstimatorSpec& est = cfg.estimator;

  const bool needs_clusters = !cfg.fixed_signal.has_value() ||
                              est.id == "sp_square" || est.id == "sp_eps";
  if (needs_clusters)
    ctx.indicators = spectral_cluster_indicators(ctx.decomp,
                                                 cfg.signal_clusters,
                                                 master.substream(1).seed());

  for (const auto& spec : est.kernels)
    ctx.kernels.push_back(laplacian_kernel(ctx.decomp, spec));
  for (const auto& spec : est.kernels_eta)
    ctx.kernels_eta.push_back(laplacian_kernel(ctx.decomp, spec));
  if (est.id == "mkl_rs" || est.id == "mkl_kc" || est.id == "mkrikf") {
    ctx.dict = laplacian_dictionary(ctx.decomp, est.kernels);
    if (est.id == "mkrikf")
      ctx.dict_eta = laplacian_dictionary(
          ctx.decomp, est.kernels_eta.empty() ? est.kernels : est.kernels_eta);
  }

  if (est.id == "kkf") {
    // extended graph with diagonal coupling; the regularized-Laplacian map
    // keeps the inverse kernel block tridiagonal, which is what the chain
    // factorization needs
    if (est.kernels.empty() ||
        !std::holds_alternative<RegularizedLaplacianMap>(est.kernels[0]))
      throw ConfigError("kkf estimator needs a regularized_laplacian kernel");
    const double sigma2 =
        std::get<RegularizedLaplacianMap>(est.kernels[0]).sigma2;
    std::vector<Graph> frames(cfg.t_len, ctx.graph);
    const ExtendedGraph ext = build_extended_adjacency(
        frames, DiagonalCoupling{est.coupling_alpha});
    const Eigen::MatrixXd a_ext = ext.assemble();
    const Eigen::MatrixXd lap_ext =
        Eigen::MatrixXd(a_ext.rowwise().sum().asDiagonal()) - a_ext;
    const Eigen::Index n = static_cast<Eigen::Index>(ctx.graph.n());
    std::vector<Eigen::MatrixXd> diag_blocks, off_blocks;
    for (std::size_t t = 0; t < cfg.t_len; ++t) {
      Eigen::MatrixXd d =
          sigma2 * lap_ext.block(static_cast<Eigen::Index>(t) * n,
                                 static_cast<Eigen::Index>(t) * n, n, n);
      d.diagonal().array() += 1.0;
      diag_blocks.push_back(d);
      if (t >= 1)
        off_blocks.push_back(sigma2 *
                             lap_ext.block(static_cast<Eigen::Index>(t) * n,
                                           static_cast<Eigen::Index>(t - 1) * n,
                                           n, n));
    }
    const BlockTridiagonalMatrix precision =
        make_block_tridiagonal(diag_blocks, off_blocks);
    ctx.kkf_params = kkf_parameters(precision);
    ctx.kernel_ext = space_time_kernel_from_inverse(precision);
  }
  return ctx;
}

/// Bandlimited AR(1) trajectory: gamma(t) = a gamma(t-1) + sqrt(1-a^2) w(t),
/// stationary at N(0, I), embedded through the leading eigenvectors.
inline std::vector<Eigen::VectorXd> trajectory(const ExperimentContext& ctx,
                                               const ExperimentConfig& cfg,
                                               Rng rng) {
  const std::size_t b = cfg.signal_eigs;
  const double a = cfg.trend_coefficient;
  if (std::abs(a) >= 1.0)
    throw ConfigError("trend coefficient must satisfy |a| < 1");
  const Eigen::MatrixXd u_b =
      ctx.decomp.eigenvectors.leftCols(static_cast<Eigen::Index>(b));
  Eigen::VectorXd gamma(static_cast<Eigen::Index>(b));
  for (Eigen::Index i = 0; i < gamma.size(); ++i) gamma[i] = rng.normal();
  std::vector<Eigen::VectorXd> out;
  out.reserve(cfg.t_len);
  out.push_back(u_b * gamma);
  for (std::size_t t = 1; t < cfg.t_len; ++t) {
    for (Eigen::Index i = 0; i < gamma.size(); ++i)
      gamma[i] = a * gamma[i] + std::sqrt(1.0 - a * a) * rng.normal();
    out.push_back(u_b * gamma);
  }
  return out;
}

inline TrialResult run_static_trial(const ExperimentContext& ctx,
                                    const ExperimentConfig& cfg,
                                    std::size_t trial) {
  const EstimatorSpec& est = cfg.estimator;
  Rng trial_rng = Rng(cfg.master_seed).substream(1000 + trial);
  const Eigen::VectorXd f =
      cfg.fixed_signal
          ? *cfg.fixed_signal
          : generate_synthetic_signal(ctx.decomp, ctx.indicators,
                                      cfg.signal_eigs,
                                      trial_rng.substream(0).seed())
                .f;
  const Observation obs =
      sample_and_corrupt(f, cfg.sample_count, cfg.snr_db, cfg.outliers,
                         trial_rng.substream(1).seed());

  Eigen::VectorXd f_hat;
  if (est.id == "krr") {
    f_hat = krr_fit(ctx.kernels.at(0), obs, est.mu).f_hat;
  } else if (est.id == "bl") {
    f_hat = bl_estimate(ctx.decomp, obs, est.bandwidth);
  } else if (est.id == "lmmse") {
    const double sigma_e2 =
        est.sigma_e2 ? *est.sigma_e2 : snr_noise_variance(f, cfg.snr_db);
    f_hat = lmmse_estimate(ctx.kernels.at(0), obs, sigma_e2);
  } else if (est.id == "sp_square" || est.id == "sp_eps") {
    const ParametricBasis basis = make_parametric_basis(ctx.indicators);
    f_hat = est.id == "sp_square"
                ? semiparametric_fit_square(ctx.kernels.at(0), basis, obs,
                                            est.mu)
                      .f_hat
                : semiparametric_fit_eps(ctx.kernels.at(0), basis, obs, est.mu,
                                         est.eps)
                      .f_hat;
  } else if (est.id == "mkl_rs") {
    f_hat = rkhs_superposition_fit(ctx.dict, obs, est.mu, est.mkl).f_hat;
  } else if (est.id == "mkl_kc") {
    f_hat = kernel_combination_fit(ctx.dict, obs, est.mu, est.mkl).f_hat;
  } else {
    throw ConfigError("unknown estimator id: " + est.id);
  }

  TrialResult res;
  res.nmse = nmse(f_hat, f);
  return res;
}

inline TrialResult run_dynamic_trial(const ExperimentContext& ctx,
                                     const ExperimentConfig& cfg,
                                     std::size_t trial) {
  const EstimatorSpec& est = cfg.estimator;
  Rng trial_rng = Rng(cfg.master_seed).substream(1000 + trial);
  const std::vector<Eigen::VectorXd> signal =
      trajectory(ctx, cfg, trial_rng.substream(0));
  const std::size_t n = ctx.graph.n();

  // one mask per trial, reused each slot; fresh noise per slot
  std::vector<std::size_t> perm(n);
  {
    Rng mask_rng = trial_rng.substream(1);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < cfg.sample_count; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(mask_rng.uniform_int(
                  0, static_cast<std::uint64_t>(n - 1 - i)));
      std::swap(perm[i], perm[j]);
    }
  }
  std::vector<std::size_t> indices(
      perm.begin(), perm.begin() + static_cast<long>(cfg.sample_count));
  std::sort(indices.begin(), indices.end());
  const SamplingMask mask = make_sampling_mask(indices, n);

  std::vector<Observation> slots;
  slots.reserve(cfg.t_len);
  for (std::size_t t = 0; t < cfg.t_len; ++t)
    slots.push_back(corrupt_at(signal[t], mask, cfg.snr_db, cfg.outliers,
                               trial_rng.substream(100 + t).seed()));
  const TimeSeriesObservations obs = make_time_series(n, slots);

  std::vector<Eigen::VectorXd> estimates(cfg.t_len);
  if (est.id == "ie") {
    for (std::size_t t = 0; t < cfg.t_len; ++t)
      estimates[t] =
          instantaneous_estimate(ctx.kernels.at(0), obs.slots[t], est.mu, t + 1);
  } else if (est.id == "kkf") {
    Eigen::VectorXd sigma2(static_cast<Eigen::Index>(cfg.t_len));
    for (std::size_t t = 0; t < cfg.t_len; ++t)
      sigma2[static_cast<Eigen::Index>(t)] =
          est.mu * static_cast<double>(obs.slots[t].mask.size());
    const std::vector<KkfState> states = kkf_run(*ctx.kkf_params, obs, sigma2);
    for (std::size_t t = 0; t < cfg.t_len; ++t) estimates[t] = states[t].f_hat;
  } else if (est.id == "kekrikf") {
    SpatioTemporalModel model;
    model.transition =
        est.transition_alpha *
        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                  static_cast<Eigen::Index>(n));
    model.kernel_nu = ctx.kernels.at(0);
    model.kernel_eta = ctx.kernels.size() > 1 ? ctx.kernels.at(1)
                                              : ctx.kernels.at(0);
    model.mu1 = est.mu1;
    model.mu2 = est.mu2;
    KrigedState state = kekrikf_initial_state(n);
    for (std::size_t t = 0; t < cfg.t_len; ++t) {
      state = kekrikf_step(state, model, obs.slots[t]);
      estimates[t] = state.f_chi + state.f_nu;
    }
  } else if (est.id == "mkrikf") {
    const Eigen::MatrixXd transition =
        est.transition_alpha *
        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                  static_cast<Eigen::Index>(n));
    const MkrikfResult run =
        mkrikf_run(obs, ctx.dict, ctx.dict_eta, transition, est.mu1, est.mu2,
                   est.rho_nu, est.rho_eta);
    for (std::size_t t = 0; t < cfg.t_len; ++t)
      estimates[t] = run.states[t].f_chi + run.states[t].f_nu;
  } else {
    throw ConfigError("unknown estimator id: " + est.id);
  }

  TrialResult res;
  res.per_slot.reserve(cfg.t_len);
  double total = 0.0;
  for (std::size_t t = 0; t < cfg.t_len; ++t) {
    const double e = nmse(estimates[t], signal[t]);
    res.per_slot.push_back(e);
    total += e;
  }
  res.nmse = total / static_cast<double>(cfg.t_len);
  return res;
}

}  // namespace detail

/// Runs all trials of one experiment. The graph, clusters, and kernels are
/// built once from the master seed; each trial draws its signal, mask, and
/// noise from substreams indexed by the trial number, so the report does not
/// depend on how trials are scheduled across threads. Trial failures are
/// recorded, not propagated.
inline EvaluationReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.trials == 0) throw ConfigError("trials must be >= 1");
  if (detail::is_dynamic_estimator(cfg.estimator.id) && cfg.t_len < 1)
    throw ConfigError("dynamic estimator needs t_len >= 1");
  const auto start = std::chrono::steady_clock::now();
  const detail::ExperimentContext ctx = detail::prepare_context(cfg);
  const bool dynamic = detail::is_dynamic_estimator(cfg.estimator.id);

  std::vector<TrialResult> results(cfg.trials);
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min(thread_budget(), cfg.trials);
  const auto work = [&]() {
    for (;;) {
      const std::size_t trial = next.fetch_add(1);
      if (trial >= cfg.trials) return;
      try {
        results[trial] = dynamic ? detail::run_dynamic_trial(ctx, cfg, trial)
                                 : detail::run_static_trial(ctx, cfg, trial);
      } catch (const std::exception& e) {
        results[trial].failed = true;
        results[trial].error = e.what();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  EvaluationReport report;
  report.estimator_id = cfg.estimator.id;
  report.master_seed = cfg.master_seed;
  report.trials = cfg.trials;
  report.per_trial = std::move(results);
  double total = 0.0;
  std::size_t ok = 0;
  for (const TrialResult& r : report.per_trial) {
    if (r.failed) {
      ++report.failures;
      continue;
    }
    total += r.nmse;
    ++ok;
  }
  if (ok > 0) report.mean_nmse = total / static_cast<double>(ok);
  if (dynamic && ok > 0) {
    report.mean_per_slot.assign(cfg.t_len, 0.0);
    for (const TrialResult& r : report.per_trial) {
      if (r.failed) continue;
      for (std::size_t t = 0; t < cfg.t_len; ++t)
        report.mean_per_slot[t] += r.per_slot[t];
    }
    for (double& v : report.mean_per_slot) v /= static_cast<double>(ok);
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

}  // namespace graphkernel
