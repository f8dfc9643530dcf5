#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "graphkernel/errors.hpp"
#include "graphkernel/graph.hpp"
#include "graphkernel/linalg.hpp"

namespace graphkernel {

// Spectral weight maps r(lambda). A Laplacian kernel penalizes the
// frequency lambda by r(lambda); the kernel eigenvalue is 1/r(lambda).

struct DiffusionMap {
  double sigma2 = 1.0;  // r(l) = exp(sigma2 l / 2)
};

struct PStepRandomWalkMap {
  double a = 2.0;  // r(l) = (a - l)^(-p), requires a > lambda_max
  double p = 1.0;
};

struct RegularizedLaplacianMap {
  double sigma2 = 1.0;  // r(l) = 1 + sigma2 l
};

struct BandlimitedMap {
  double beta = 1.0;  // r(l) = 1/beta if l <= lambda_max, beta otherwise
  double lambda_max = 0.0;
};

/// Rank-based band rejection: frequencies ranked k..N-l (1-based, ascending)
/// are suppressed with weight beta, the rest amplified with 1/beta.
struct BandRejectMap {
  std::size_t k = 1;
  std::size_t l = 0;
  double beta = 1.0;
};

using SpectralMapSpec = std::variant<DiffusionMap, PStepRandomWalkMap,
                                     RegularizedLaplacianMap, BandlimitedMap,
                                     BandRejectMap>;

inline void validate_spec(const SpectralMapSpec& spec) {
  if (const auto* d = std::get_if<DiffusionMap>(&spec)) {
    if (d->sigma2 < 0.0) throw ConfigError("diffusion sigma2 must be >= 0");
  } else if (const auto* ps = std::get_if<PStepRandomWalkMap>(&spec)) {
    if (ps->a < 2.0) throw ConfigError("p-step a must be >= 2");
    if (ps->p < 0.0) throw ConfigError("p-step p must be >= 0");
  } else if (const auto* r = std::get_if<RegularizedLaplacianMap>(&spec)) {
    if (r->sigma2 < 0.0) throw ConfigError("regularized sigma2 must be >= 0");
  } else if (const auto* b = std::get_if<BandlimitedMap>(&spec)) {
    if (b->beta <= 0.0) throw ConfigError("bandlimited beta must be > 0");
  } else if (const auto* br = std::get_if<BandRejectMap>(&spec)) {
    if (br->beta <= 0.0) throw ConfigError("band-reject beta must be > 0");
    if (br->k < 1) throw ConfigError("band-reject k must be >= 1");
  }
}

inline std::string spec_name(const SpectralMapSpec& spec) {
  std::ostringstream out;
  if (const auto* d = std::get_if<DiffusionMap>(&spec))
    out << "diffusion(sigma2=" << d->sigma2 << ")";
  else if (const auto* ps = std::get_if<PStepRandomWalkMap>(&spec))
    out << "p_step_random_walk(a=" << ps->a << ",p=" << ps->p << ")";
  else if (const auto* r = std::get_if<RegularizedLaplacianMap>(&spec))
    out << "regularized_laplacian(sigma2=" << r->sigma2 << ")";
  else if (const auto* b = std::get_if<BandlimitedMap>(&spec))
    out << "bandlimited(beta=" << b->beta << ",lambda_max=" << b->lambda_max
        << ")";
  else if (const auto* br = std::get_if<BandRejectMap>(&spec))
    out << "band_reject(k=" << br->k << ",l=" << br->l << ",beta=" << br->beta
        << ")";
  return out.str();
}

/// Position of an eigenvalue in the ascending spectrum, for rank-based maps.
struct SpectralRank {
  std::size_t index = 0;  // 0-based
  std::size_t count = 0;
};

inline double spectral_map_eval(const SpectralMapSpec& spec, double lambda,
                                std::optional<SpectralRank> rank = {}) {
  validate_spec(spec);
  if (lambda < 0.0)
    throw std::invalid_argument("spectral map argument must be >= 0");
  if (const auto* d = std::get_if<DiffusionMap>(&spec))
    return std::exp(d->sigma2 * lambda / 2.0);
  if (const auto* ps = std::get_if<PStepRandomWalkMap>(&spec)) {
    // Beyond the pole the map is non-positive or complex; both break the PSD
    // contract, so the whole half-line lambda >= a is rejected.
    if (lambda >= ps->a) throw PoleAtEigenvalue(lambda);
    return std::pow(ps->a - lambda, -ps->p);
  }
  if (const auto* r = std::get_if<RegularizedLaplacianMap>(&spec))
    return 1.0 + r->sigma2 * lambda;
  if (const auto* b = std::get_if<BandlimitedMap>(&spec))
    return lambda <= b->lambda_max ? 1.0 / b->beta : b->beta;
  const auto& br = std::get<BandRejectMap>(spec);
  if (!rank)
    throw std::invalid_argument("band-reject map needs the eigenvalue rank");
  const std::size_t rank1 = rank->index + 1;  // paper counts from 1
  const bool rejected = rank1 >= br.k && rank1 + br.l <= rank->count;
  return rejected ? br.beta : 1.0 / br.beta;
}

/// Symmetric PSD similarity matrix plus a provenance note for reports.
struct KernelMatrix {
  Eigen::MatrixXd k;
  std::string provenance;

  std::size_t n() const { return static_cast<std::size_t>(k.rows()); }
};

/// Kernel eigenvalues 1/r(lambda_i) in the Laplacian eigenbasis; map values
/// below kPinvTolRel of the largest are treated as exact zeros.
inline Eigen::VectorXd laplacian_kernel_eigenvalues(
    const SpectralDecomposition& decomp, const SpectralMapSpec& spec) {
  const std::size_t n = decomp.n();
  Eigen::VectorXd r(n);
  for (std::size_t i = 0; i < n; ++i)
    r[i] = spectral_map_eval(spec, decomp.eigenvalues[i],
                             SpectralRank{i, n});
  const double cutoff = kPinvTolRel * r.maxCoeff();
  Eigen::VectorXd out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = r[i] > cutoff ? 1.0 / r[i] : 0.0;
  return out;
}

/// K = U r^+(Lambda) U' per the spectral-map table.
inline KernelMatrix laplacian_kernel(const SpectralDecomposition& decomp,
                                     const SpectralMapSpec& spec) {
  const Eigen::VectorXd kvals = laplacian_kernel_eigenvalues(decomp, spec);
  Eigen::MatrixXd k = decomp.eigenvectors * kvals.asDiagonal() *
                      decomp.eigenvectors.transpose();
  return KernelMatrix{linalg::symmetrize(k), "laplacian:" + spec_name(spec)};
}

/// Sample covariance of historical signals, rows = snapshots. Centered by
/// column means, normalized by the row count m, PSD-clipped.
inline KernelMatrix covariance_kernel(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 1) throw EmptyHistory();
  const double m = static_cast<double>(samples.rows());
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - mean;
  Eigen::MatrixXd c = centered.transpose() * centered / m;
  return KernelMatrix{linalg::psd_clip(linalg::symmetrize(c)),
                      "covariance(m=" + std::to_string(samples.rows()) + ")"};
}

/// Common eigenbasis of a dictionary whose members are Laplacian kernels of
/// one graph; member_eigenvalues column m holds member m's kernel spectrum.
struct SharedEigenbasis {
  SpectralDecomposition decomp;
  Eigen::MatrixXd member_eigenvalues;  // n x M
};

struct KernelDictionary {
  std::vector<KernelMatrix> members;
  std::optional<SharedEigenbasis> shared;

  std::size_t size() const { return members.size(); }
  std::size_t n() const { return members.empty() ? 0 : members.front().n(); }
};

inline KernelDictionary make_dictionary(std::vector<KernelMatrix> members) {
  if (members.empty()) throw DimensionMismatch("dictionary must be non-empty");
  const std::size_t n = members.front().n();
  for (const KernelMatrix& m : members)
    if (m.n() != n) throw DimensionMismatch("dictionary members differ in size");
  return KernelDictionary{std::move(members), std::nullopt};
}

/// Builds a dictionary of Laplacian kernels sharing `decomp` as eigenbasis,
/// enabling the O(NM) spectral fast paths downstream.
inline KernelDictionary laplacian_dictionary(
    const SpectralDecomposition& decomp,
    const std::vector<SpectralMapSpec>& specs) {
  if (specs.empty()) throw DimensionMismatch("dictionary must be non-empty");
  const std::size_t n = decomp.n();
  KernelDictionary dict;
  Eigen::MatrixXd eigs(n, specs.size());
  for (std::size_t m = 0; m < specs.size(); ++m) {
    const Eigen::VectorXd kvals =
        laplacian_kernel_eigenvalues(decomp, specs[m]);
    eigs.col(static_cast<Eigen::Index>(m)) = kvals;
    Eigen::MatrixXd k = decomp.eigenvectors * kvals.asDiagonal() *
                        decomp.eigenvectors.transpose();
    dict.members.push_back(
        KernelMatrix{linalg::symmetrize(k), "laplacian:" + spec_name(specs[m])});
  }
  dict.shared = SharedEigenbasis{decomp, std::move(eigs)};
  return dict;
}

/// K(theta) = sum_m theta_m K_m.
inline KernelMatrix combine(const KernelDictionary& dict,
                            const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != dict.size())
    throw DimensionMismatch("theta length vs dictionary size");
  for (Eigen::Index m = 0; m < theta.size(); ++m)
    if (theta[m] < 0.0) throw NegativeCoefficient(static_cast<std::size_t>(m));
  const Eigen::Index n = static_cast<Eigen::Index>(dict.n());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t m = 0; m < dict.size(); ++m)
    k += theta[static_cast<Eigen::Index>(m)] * dict.members[m].k;
  return KernelMatrix{std::move(k),
                      "combination(M=" + std::to_string(dict.size()) + ")"};
}

/// f' K^+ f via the spectral pseudo-inverse. f must lie in range(K): a
/// projection residual of 1e-6 of ||f|| or more raises OutOfRange.
inline double rkhs_norm_sq(const KernelMatrix& kernel,
                           const Eigen::VectorXd& f) {
  if (f.size() != kernel.k.rows())
    throw DimensionMismatch("signal length vs kernel size");
  const double fnorm = f.norm();
  if (fnorm == 0.0) return 0.0;
  const linalg::SymmetricEigen eig = linalg::sym_eig(kernel.k);
  const double cutoff = kPinvTolRel * std::max(eig.values.maxCoeff(), 0.0);
  const Eigen::VectorXd coeffs = eig.vectors.transpose() * f;
  double norm_sq = 0.0;
  double residual_sq = 0.0;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    if (eig.values[i] > cutoff)
      norm_sq += coeffs[i] * coeffs[i] / eig.values[i];
    else
      residual_sq += coeffs[i] * coeffs[i];
  }
  if (std::sqrt(residual_sq) >= 1e-6 * fnorm)
    throw OutOfRange("projection residual " +
                     std::to_string(std::sqrt(residual_sq)));
  return norm_sq;
}

/// Symmetric block-tridiagonal matrix; off_blocks[t-2] = E(t) occupies block
/// (t, t-1) of the assembled matrix, t = 2..T.
struct BlockTridiagonalMatrix {
  std::size_t n = 0;
  std::size_t t_len = 0;
  std::vector<Eigen::MatrixXd> diag_blocks;
  std::vector<Eigen::MatrixXd> off_blocks;

  Eigen::MatrixXd assemble() const {
    const Eigen::Index nn = static_cast<Eigen::Index>(n);
    const Eigen::Index total = nn * static_cast<Eigen::Index>(t_len);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(total, total);
    for (std::size_t t = 0; t < t_len; ++t) {
      const Eigen::Index off = static_cast<Eigen::Index>(t) * nn;
      out.block(off, off, nn, nn) = diag_blocks[t];
      if (t > 0) {
        out.block(off, off - nn, nn, nn) = off_blocks[t - 1];
        out.block(off - nn, off, nn, nn) = off_blocks[t - 1].transpose();
      }
    }
    return out;
  }
};

inline BlockTridiagonalMatrix make_block_tridiagonal(
    std::vector<Eigen::MatrixXd> diag_blocks,
    std::vector<Eigen::MatrixXd> off_blocks) {
  if (diag_blocks.empty()) throw DimensionMismatch("need at least one block");
  if (off_blocks.size() + 1 != diag_blocks.size())
    throw DimensionMismatch("need T-1 off-diagonal blocks");
  const Eigen::Index n = diag_blocks.front().rows();
  for (const Eigen::MatrixXd& d : diag_blocks) {
    if (d.rows() != n || d.cols() != n)
      throw DimensionMismatch("diagonal block shape");
    const double scale = std::max(d.cwiseAbs().maxCoeff(), 1.0);
    if (!linalg::is_symmetric(d, 1e-10 * scale))
      throw NotSymmetric("diagonal block of a block-tridiagonal matrix");
  }
  for (const Eigen::MatrixXd& e : off_blocks)
    if (e.rows() != n || e.cols() != n)
      throw DimensionMismatch("off-diagonal block shape");
  return BlockTridiagonalMatrix{static_cast<std::size_t>(n),
                                diag_blocks.size(), std::move(diag_blocks),
                                std::move(off_blocks)};
}

/// Space-time kernel whose inverse is the given block-tridiagonal matrix.
inline KernelMatrix space_time_kernel_from_inverse(
    const BlockTridiagonalMatrix& inv) {
  const Eigen::MatrixXd assembled = inv.assemble();
  Eigen::LLT<Eigen::MatrixXd> llt(assembled);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("assembled block-tridiagonal inverse");
  Eigen::MatrixXd k = llt.solve(
      Eigen::MatrixXd::Identity(assembled.rows(), assembled.cols()));
  return KernelMatrix{linalg::symmetrize(k), "inverse-block-tridiagonal"};
}

}  // namespace graphkernel
