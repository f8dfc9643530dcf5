#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <utility>
#include <variant>
#include <vector>

#include "graphkernel/errors.hpp"
#include "graphkernel/linalg.hpp"

namespace graphkernel {

/// Undirected weighted graph: symmetric non-negative adjacency, zero diagonal.
struct Graph {
  Eigen::MatrixXd adjacency;

  std::size_t n() const { return static_cast<std::size_t>(adjacency.rows()); }
};

/// Eigenpairs of a graph Laplacian, eigenvalues ascending, eigenvectors as
/// orthonormal columns. Sign convention: first nonzero component of each
/// eigenvector is positive.
struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;

  std::size_t n() const { return static_cast<std::size_t>(eigenvalues.size()); }
};

/// T graph snapshots plus T-1 coupling blocks; block t of the assembled
/// matrix couples slot t to slot t-1 (coupling_blocks[t-2] = B(t), t = 2..T).
struct ExtendedGraph {
  std::size_t n = 0;
  std::size_t t_len = 0;
  std::vector<Eigen::MatrixXd> diagonal_blocks;
  std::vector<Eigen::MatrixXd> coupling_blocks;

  /// Materializes the NT x NT block-tridiagonal adjacency (only on request;
  /// storage stays O(T n^2) otherwise).
  Eigen::MatrixXd assemble() const {
    const Eigen::Index nn = static_cast<Eigen::Index>(n);
    const Eigen::Index total = nn * static_cast<Eigen::Index>(t_len);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(total, total);
    for (std::size_t t = 0; t < t_len; ++t) {
      const Eigen::Index off = static_cast<Eigen::Index>(t) * nn;
      out.block(off, off, nn, nn) = diagonal_blocks[t];
      if (t > 0) {
        const Eigen::MatrixXd& b = coupling_blocks[t - 1];
        out.block(off, off - nn, nn, nn) = b;
        out.block(off - nn, off, nn, nn) = b.transpose();
      }
    }
    return out;
  }
};

/// Checks symmetry, non-negativity and zero diagonal; errors name the
/// offending index pair.
inline Graph validate_graph(const Eigen::MatrixXd& adjacency) {
  if (adjacency.rows() != adjacency.cols())
    throw DimensionMismatch("adjacency must be square");
  const Eigen::Index n = adjacency.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) throw SelfLoop(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < n; ++j) {
      if (adjacency(i, j) != adjacency(j, i))
        throw AsymmetricAdjacency(static_cast<std::size_t>(std::min(i, j)),
                                  static_cast<std::size_t>(std::max(i, j)));
      if (adjacency(i, j) < 0.0)
        throw NegativeWeight(static_cast<std::size_t>(i),
                             static_cast<std::size_t>(j));
    }
  }
  return Graph{adjacency};
}

/// L := diag(A 1) - A.
inline Eigen::MatrixXd laplacian(const Graph& g) {
  const Eigen::VectorXd degrees = g.adjacency.rowwise().sum();
  Eigen::MatrixXd l = -g.adjacency;
  l.diagonal() += degrees;
  return l;
}

/// Symmetric eigendecomposition with Laplacian conventions: eigenvalues
/// within -1e-10 of zero are clipped to 0, eigenvector signs are fixed so the
/// first nonzero component is positive.
inline SpectralDecomposition eigendecompose(const Eigen::MatrixXd& l) {
  if (l.rows() != l.cols()) throw NotSymmetric("matrix must be square");
  const double scale = std::max(l.cwiseAbs().maxCoeff(), 1.0);
  if (!linalg::is_symmetric(l, 1e-12 * scale))
    throw NotSymmetric("input differs from its transpose");
  linalg::SymmetricEigen eig = linalg::sym_eig(l);
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values[i] < 0.0 && eig.values[i] >= -1e-10) eig.values[i] = 0.0;
  }
  for (Eigen::Index c = 0; c < eig.vectors.cols(); ++c) {
    for (Eigen::Index r = 0; r < eig.vectors.rows(); ++r) {
      const double v = eig.vectors(r, c);
      if (std::abs(v) > 1e-12) {
        if (v < 0.0) eig.vectors.col(c) = -eig.vectors.col(c);
        break;
      }
    }
  }
  return SpectralDecomposition{std::move(eig.values), std::move(eig.vectors)};
}

/// f' L f, the Dirichlet energy of a signal on the graph.
inline double smoothness(const Graph& g, const Eigen::VectorXd& f) {
  if (f.size() != g.adjacency.rows())
    throw DimensionMismatch("signal length " + std::to_string(f.size()) +
                            " vs " + std::to_string(g.adjacency.rows()) +
                            " vertices");
  return f.dot(laplacian(g) * f);
}

/// Coupling between consecutive snapshots: B(t) = alpha I.
struct DiagonalCoupling {
  double alpha = 0.0;
};

/// Coupling B(t) = A(t-1): each vertex connects to its neighbors one slot back.
struct PreviousAdjacencyCoupling {};

/// Caller-supplied coupling blocks B(2..T).
struct ExplicitCoupling {
  std::vector<Eigen::MatrixXd> blocks;
};

using CouplingSpec =
    std::variant<DiagonalCoupling, PreviousAdjacencyCoupling, ExplicitCoupling>;

inline ExtendedGraph build_extended_adjacency(
    const std::vector<Graph>& snapshots, const CouplingSpec& coupling) {
  if (snapshots.empty()) throw DimensionMismatch("need at least one snapshot");
  const std::size_t n = snapshots.front().n();
  ExtendedGraph out;
  out.n = n;
  out.t_len = snapshots.size();
  out.diagonal_blocks.reserve(snapshots.size());
  for (const Graph& g : snapshots) {
    if (g.n() != n) throw DimensionMismatch("snapshots must share vertex count");
    out.diagonal_blocks.push_back(g.adjacency);
  }
  const Eigen::Index nn = static_cast<Eigen::Index>(n);
  if (const auto* diag = std::get_if<DiagonalCoupling>(&coupling)) {
    if (diag->alpha < 0.0) throw NegativeCoupling(diag->alpha);
    for (std::size_t t = 1; t < snapshots.size(); ++t)
      out.coupling_blocks.push_back(diag->alpha *
                                    Eigen::MatrixXd::Identity(nn, nn));
  } else if (std::holds_alternative<PreviousAdjacencyCoupling>(coupling)) {
    for (std::size_t t = 1; t < snapshots.size(); ++t)
      out.coupling_blocks.push_back(snapshots[t - 1].adjacency);
  } else {
    const auto& blocks = std::get<ExplicitCoupling>(coupling).blocks;
    if (blocks.size() + 1 != snapshots.size())
      throw DimensionMismatch("need T-1 coupling blocks");
    for (const Eigen::MatrixXd& b : blocks) {
      if (b.rows() != nn || b.cols() != nn)
        throw DimensionMismatch("coupling block shape");
      out.coupling_blocks.push_back(b);
    }
  }
  return out;
}

}  // namespace graphkernel
