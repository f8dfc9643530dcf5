#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "graphkernel/errors.hpp"
#include "graphkernel/graph.hpp"
#include "graphkernel/observation.hpp"
#include "graphkernel/rng.hpp"

namespace graphkernel {

/// Erdos-Renyi graph with unit edge weights; each unordered pair appears
/// independently with probability p.
inline Graph generate_er_graph(std::size_t n, double p, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("generate_er_graph: n must be >= 1");
  if (p < 0.0 || p > 1.0)
    throw std::invalid_argument("generate_er_graph: p must be in [0, 1]");
  Rng rng(seed);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j)
      if (rng.bernoulli(p)) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
      }
  return Graph{a};
}

namespace detail {

struct KMeansOutcome {
  std::vector<std::size_t> labels;
  double inertia = std::numeric_limits<double>::infinity();
  bool valid = false;
};

inline KMeansOutcome kmeans_once(const Eigen::MatrixXd& rows, std::size_t k,
                                 Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(rows.rows());
  KMeansOutcome out;

  // distinct random rows as initial centroids
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(
                                  0, static_cast<std::uint64_t>(n - 1 - i)));
    std::swap(perm[i], perm[j]);
  }
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), rows.cols());
  for (std::size_t c = 0; c < k; ++c)
    centroids.row(static_cast<Eigen::Index>(c)) =
        rows.row(static_cast<Eigen::Index>(perm[c]));

  std::vector<std::size_t> labels(n, 0);
  for (std::size_t sweep = 0; sweep < 100; ++sweep) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = (rows.row(static_cast<Eigen::Index>(i)) -
                          centroids.row(static_cast<Eigen::Index>(c)))
                             .squaredNorm();
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      if (labels[i] != arg) {
        labels[i] = arg;
        changed = true;
      }
    }
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[labels[i]];
    if (std::find(counts.begin(), counts.end(), std::size_t{0}) != counts.end())
      return out;  // empty cluster: this initialization failed
    centroids.setZero();
    for (std::size_t i = 0; i < n; ++i)
      centroids.row(static_cast<Eigen::Index>(labels[i])) +=
          rows.row(static_cast<Eigen::Index>(i));
    for (std::size_t c = 0; c < k; ++c)
      centroids.row(static_cast<Eigen::Index>(c)) /=
          static_cast<double>(counts[c]);
    if (!changed) break;
  }

  out.labels = std::move(labels);
  out.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    out.inertia += (rows.row(static_cast<Eigen::Index>(i)) -
                    centroids.row(static_cast<Eigen::Index>(out.labels[i])))
                       .squaredNorm();
  out.valid = true;
  return out;
}

}  // namespace detail

/// Spectral clustering: k-means on rows of the first k Laplacian
/// eigenvectors, best inertia over seeded restarts. Returns one-hot cluster
/// indicators (n x k).
inline Eigen::MatrixXd spectral_cluster_indicators(
    const SpectralDecomposition& decomp, std::size_t k, std::uint64_t seed,
    std::size_t restarts = 100) {
  const std::size_t n = decomp.n();
  if (k < 1 || k > n)
    throw std::invalid_argument("spectral_cluster_indicators: k out of range");
  const Eigen::MatrixXd rows =
      decomp.eigenvectors.leftCols(static_cast<Eigen::Index>(k));

  Rng rng(seed);
  detail::KMeansOutcome best;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng sub = rng.substream(r);
    const detail::KMeansOutcome attempt = detail::kmeans_once(rows, k, sub);
    if (attempt.valid && attempt.inertia < best.inertia) best = attempt;
  }
  if (!best.valid)
    throw DisconnectedDegenerate(
        "k-means produced an empty cluster in every restart");

  Eigen::MatrixXd indicators = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < n; ++i)
    indicators(static_cast<Eigen::Index>(i),
               static_cast<Eigen::Index>(best.labels[i])) = 1.0;
  return indicators;
}

/// Planted signal: a bandlimited part over the leading eigenvectors plus a
/// piecewise-constant part over cluster indicators, both with iid standard
/// normal coefficients.
struct SyntheticSignal {
  Eigen::VectorXd f;
  Eigen::VectorXd bandlimited_part;
  Eigen::VectorXd cluster_part;
  Eigen::VectorXd gamma;       // bandlimited coefficients
  Eigen::VectorXd delta;       // cluster coefficients
  Eigen::MatrixXd indicators;  // n x k one-hot
};

inline SyntheticSignal generate_synthetic_signal(
    const SpectralDecomposition& decomp, const Eigen::MatrixXd& indicators,
    std::size_t n_eigs, std::uint64_t seed) {
  const std::size_t n = decomp.n();
  if (n_eigs < 1 || n_eigs > n)
    throw std::invalid_argument("generate_synthetic_signal: n_eigs range");
  if (static_cast<std::size_t>(indicators.rows()) != n)
    throw DimensionMismatch("indicator rows vs n");
  Rng rng(seed);
  SyntheticSignal sig;
  sig.indicators = indicators;
  sig.gamma.resize(static_cast<Eigen::Index>(n_eigs));
  for (Eigen::Index i = 0; i < sig.gamma.size(); ++i) sig.gamma[i] = rng.normal();
  sig.delta.resize(indicators.cols());
  for (Eigen::Index i = 0; i < sig.delta.size(); ++i) sig.delta[i] = rng.normal();
  sig.bandlimited_part =
      decomp.eigenvectors.leftCols(static_cast<Eigen::Index>(n_eigs)) *
      sig.gamma;
  sig.cluster_part = indicators * sig.delta;
  sig.f = sig.bandlimited_part + sig.cluster_part;
  return sig;
}

inline SyntheticSignal generate_synthetic_signal(
    const SpectralDecomposition& decomp, std::size_t n_eigs,
    std::size_t n_clusters, std::uint64_t seed, std::size_t restarts = 100) {
  Rng rng(seed);
  const Eigen::MatrixXd indicators = spectral_cluster_indicators(
      decomp, n_clusters, rng.substream(0).seed(), restarts);
  return generate_synthetic_signal(decomp, indicators, n_eigs,
                                   rng.substream(1).seed());
}

struct OutlierSpec {
  double probability = 0.0;
  double variance = 0.0;
};

/// Uniform sampling without replacement plus white noise at the requested
/// SNR; optional sporadic extra-variance outliers. snr_db = +inf means
/// noise-free. Draw order is fixed (indices, then per-sample noise in mask
/// order), so results are a pure function of the seed.
inline Observation sample_and_corrupt(const Eigen::VectorXd& f, std::size_t s,
                                      double snr_db,
                                      std::optional<OutlierSpec> outliers,
                                      std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(f.size());
  if (s < 1 || s > n)
    throw std::invalid_argument("sample_and_corrupt: sample count range");
  const bool noise_free = std::isinf(snr_db) && snr_db > 0.0;
  double sigma2 = 0.0;
  if (!noise_free) {
    const double power = f.squaredNorm();
    if (power == 0.0) throw UndefinedSnr();
    sigma2 = power / (static_cast<double>(n) * std::pow(10.0, snr_db / 10.0));
  }
  if (outliers && (outliers->probability < 0.0 || outliers->probability > 1.0))
    throw std::invalid_argument("sample_and_corrupt: outlier probability");

  Rng rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 0; i < s; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(
                                  0, static_cast<std::uint64_t>(n - 1 - i)));
    std::swap(perm[i], perm[j]);
  }
  std::vector<std::size_t> indices(perm.begin(),
                                   perm.begin() + static_cast<long>(s));
  std::sort(indices.begin(), indices.end());

  Eigen::VectorXd y(static_cast<Eigen::Index>(s));
  for (std::size_t i = 0; i < s; ++i) {
    double value = f[static_cast<Eigen::Index>(indices[i])];
    if (!noise_free) value += std::sqrt(sigma2) * rng.normal();
    if (outliers && rng.bernoulli(outliers->probability))
      value += std::sqrt(outliers->variance) * rng.normal();
    y[static_cast<Eigen::Index>(i)] = value;
  }
  return Observation{make_sampling_mask(std::move(indices), n), std::move(y)};
}

/// Noise/outlier corruption at a caller-chosen mask; draw order is the mask
/// order, one noise (and optional outlier) draw per sample.
inline Observation corrupt_at(const Eigen::VectorXd& f,
                              const SamplingMask& mask, double snr_db,
                              std::optional<OutlierSpec> outliers,
                              std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(f.size());
  for (std::size_t idx : mask.indices)
    if (idx >= n) throw DimensionMismatch("corrupt_at: mask exceeds n");
  const bool noise_free = std::isinf(snr_db) && snr_db > 0.0;
  double sigma2 = 0.0;
  if (!noise_free) {
    const double power = f.squaredNorm();
    if (power == 0.0) throw UndefinedSnr();
    sigma2 = power / (static_cast<double>(n) * std::pow(10.0, snr_db / 10.0));
  }
  Rng rng(seed);
  Eigen::VectorXd y(static_cast<Eigen::Index>(mask.size()));
  for (std::size_t i = 0; i < mask.size(); ++i) {
    double value = f[static_cast<Eigen::Index>(mask.indices[i])];
    if (!noise_free) value += std::sqrt(sigma2) * rng.normal();
    if (outliers && rng.bernoulli(outliers->probability))
      value += std::sqrt(outliers->variance) * rng.normal();
    y[static_cast<Eigen::Index>(i)] = value;
  }
  return Observation{mask, std::move(y)};
}

/// Noise variance implied by an SNR target for a given signal.
inline double snr_noise_variance(const Eigen::VectorXd& f, double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0.0) return 0.0;
  const double power = f.squaredNorm();
  if (power == 0.0) throw UndefinedSnr();
  return power /
         (static_cast<double>(f.size()) * std::pow(10.0, snr_db / 10.0));
}

/// ||f_hat - f||^2 / ||f||^2.
inline double nmse(const Eigen::VectorXd& f_hat, const Eigen::VectorXd& f) {
  if (f_hat.size() != f.size())
    throw DimensionMismatch("nmse: estimate vs reference length");
  const double ref = f.squaredNorm();
  if (ref == 0.0) throw ZeroReference();
  return (f_hat - f).squaredNorm() / ref;
}

}  // namespace graphkernel
