#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "graphkernel/errors.hpp"

namespace graphkernel {

/// Ordered subset of vertex indices observed at one time slot; realizes the
/// binary sampling matrix with rows e_{n_s}'.
struct SamplingMask {
  std::vector<std::size_t> indices;  // strictly increasing, in [0, n)

  std::size_t size() const { return indices.size(); }
};

inline SamplingMask make_sampling_mask(std::vector<std::size_t> indices,
                                       std::size_t n) {
  for (std::size_t s = 0; s < indices.size(); ++s) {
    if (indices[s] >= n)
      throw DimensionMismatch("mask index " + std::to_string(indices[s]) +
                              " out of range for n=" + std::to_string(n));
    if (s > 0 && indices[s] <= indices[s - 1])
      throw DimensionMismatch("mask indices must be strictly increasing");
  }
  return SamplingMask{std::move(indices)};
}

struct Observation {
  SamplingMask mask;
  Eigen::VectorXd y;
};

inline Observation make_observation(SamplingMask mask, Eigen::VectorXd y) {
  if (static_cast<std::size_t>(y.size()) != mask.size())
    throw DimensionMismatch("observation length vs mask size");
  return Observation{std::move(mask), std::move(y)};
}

/// Basis functions evaluated on vertices, one column per function.
struct ParametricBasis {
  Eigen::MatrixXd b;  // n x M, M >= 1

  std::size_t n() const { return static_cast<std::size_t>(b.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(b.cols()); }
};

inline ParametricBasis make_parametric_basis(Eigen::MatrixXd b) {
  if (b.cols() < 1)
    throw DimensionMismatch("parametric basis needs at least one column");
  return ParametricBasis{std::move(b)};
}

namespace mask_ops {

/// Phi f: values of f at the masked vertices.
inline Eigen::VectorXd select(const Eigen::VectorXd& f,
                              const SamplingMask& mask) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(mask.size()));
  for (std::size_t s = 0; s < mask.size(); ++s)
    out[static_cast<Eigen::Index>(s)] =
        f[static_cast<Eigen::Index>(mask.indices[s])];
  return out;
}

/// Phi M: masked rows.
inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m,
                                   const SamplingMask& mask) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(mask.size()), m.cols());
  for (std::size_t s = 0; s < mask.size(); ++s)
    out.row(static_cast<Eigen::Index>(s)) =
        m.row(static_cast<Eigen::Index>(mask.indices[s]));
  return out;
}

/// M Phi': masked columns.
inline Eigen::MatrixXd select_cols(const Eigen::MatrixXd& m,
                                   const SamplingMask& mask) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(mask.size()));
  for (std::size_t s = 0; s < mask.size(); ++s)
    out.col(static_cast<Eigen::Index>(s)) =
        m.col(static_cast<Eigen::Index>(mask.indices[s]));
  return out;
}

/// Phi M Phi': masked principal submatrix.
inline Eigen::MatrixXd select_block(const Eigen::MatrixXd& m,
                                    const SamplingMask& mask) {
  const Eigen::Index s = static_cast<Eigen::Index>(mask.size());
  Eigen::MatrixXd out(s, s);
  for (Eigen::Index i = 0; i < s; ++i)
    for (Eigen::Index j = 0; j < s; ++j)
      out(i, j) = m(static_cast<Eigen::Index>(mask.indices[i]),
                    static_cast<Eigen::Index>(mask.indices[j]));
  return out;
}

/// Phi' x: scatter sampled values back to a length-n vector (zeros elsewhere).
inline Eigen::VectorXd scatter(const Eigen::VectorXd& x,
                               const SamplingMask& mask, std::size_t n) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < mask.size(); ++s)
    out[static_cast<Eigen::Index>(mask.indices[s])] =
        x[static_cast<Eigen::Index>(s)];
  return out;
}

}  // namespace mask_ops
}  // namespace graphkernel
