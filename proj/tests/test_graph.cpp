#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "graphkernel/graph.hpp"
#include "graphkernel/harness.hpp"
#include "oracles.hpp"

using namespace graphkernel;

namespace {

Eigen::MatrixXd path3() {
  Eigen::MatrixXd a(3, 3);
  a << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  return a;
}

Eigen::MatrixXd triangle() {
  Eigen::MatrixXd a(3, 3);
  a << 0, 1, 1, 1, 0, 1, 1, 1, 0;
  return a;
}

}  // namespace

TEST_CASE("validate_graph accepts weighted symmetric hollow matrices") {
  Eigen::MatrixXd a(2, 2);
  a << 0, 2.5, 2.5, 0;
  const Graph g = validate_graph(a);
  REQUIRE(g.n() == 2);
  REQUIRE(g.adjacency(0, 1) == 2.5);
}

TEST_CASE("validate_graph rejects malformed adjacency") {
  Eigen::MatrixXd asym = path3();
  asym(0, 1) = 2.0;  // (1, 0) stays 1
  REQUIRE_THROWS_AS(validate_graph(asym), AsymmetricAdjacency);

  Eigen::MatrixXd loop = path3();
  loop(1, 1) = 1.0;
  REQUIRE_THROWS_AS(validate_graph(loop), SelfLoop);

  Eigen::MatrixXd negative = path3();
  negative(0, 1) = negative(1, 0) = -0.5;
  REQUIRE_THROWS_AS(validate_graph(negative), NegativeWeight);

  Eigen::MatrixXd rect(2, 3);
  rect.setZero();
  REQUIRE_THROWS_AS(validate_graph(rect), DimensionMismatch);
}

TEST_CASE("laplacian of the 3-path matches the hand computation") {
  const Graph g = validate_graph(path3());
  Eigen::MatrixXd expected(3, 3);
  expected << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  REQUIRE(oracles::max_abs_diff(laplacian(g), expected) == 0.0);
}

TEST_CASE("laplacian rows sum to zero and the matrix is PSD") {
  const Graph g = generate_er_graph(24, 0.3, 7);
  const Eigen::MatrixXd l = laplacian(g);
  REQUIRE(l.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
  REQUIRE(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("smoothness equals the pairwise difference sum") {
  const Graph g = validate_graph(path3());
  Eigen::VectorXd f(3);
  f << 1, 2, 4;
  REQUIRE_THAT(smoothness(g, f), Catch::Matchers::WithinAbs(5.0, 1e-12));

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph h = generate_er_graph(15, 0.4, 100 + trial);
    const Eigen::VectorXd x = oracles::random_vector(15, rng);
    REQUIRE_THAT(smoothness(h, x),
                 Catch::Matchers::WithinAbs(
                     oracles::pairwise_smoothness(h.adjacency, x), 1e-9));
  }

  Eigen::VectorXd constant = Eigen::VectorXd::Constant(3, 4.0);
  REQUIRE_THAT(smoothness(g, constant), Catch::Matchers::WithinAbs(0.0, 1e-12));
  Eigen::VectorXd wrong(2);
  wrong << 1, 2;
  REQUIRE_THROWS_AS(smoothness(g, wrong), DimensionMismatch);
}

TEST_CASE("eigendecompose sorts ascending with orthonormal vectors") {
  const Graph g = validate_graph(triangle());
  const SpectralDecomposition d = eigendecompose(laplacian(g));
  Eigen::VectorXd expected(3);
  expected << 0, 3, 3;
  REQUIRE(oracles::rel_diff(d.eigenvalues, expected) < 1e-12);
  REQUIRE(oracles::max_abs_diff(
              d.eigenvectors.transpose() * d.eigenvectors,
              Eigen::MatrixXd::Identity(3, 3)) < 1e-12);

  const Graph h = generate_er_graph(20, 0.3, 3);
  const SpectralDecomposition dh = eigendecompose(laplacian(h));
  for (Eigen::Index i = 1; i < dh.eigenvalues.size(); ++i)
    REQUIRE(dh.eigenvalues[i] >= dh.eigenvalues[i - 1]);
  // reconstruction
  const Eigen::MatrixXd rebuilt = dh.eigenvectors *
                                  dh.eigenvalues.asDiagonal() *
                                  dh.eigenvectors.transpose();
  REQUIRE(oracles::max_abs_diff(rebuilt, laplacian(h)) < 1e-9);
}

TEST_CASE("eigendecompose is deterministic and sign-fixed") {
  const Graph g = generate_er_graph(16, 0.35, 5);
  const SpectralDecomposition a = eigendecompose(laplacian(g));
  const SpectralDecomposition b = eigendecompose(laplacian(g));
  REQUIRE(oracles::max_abs_diff(a.eigenvectors, b.eigenvectors) == 0.0);
  REQUIRE((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
  // each column leads with a positive component
  for (Eigen::Index c = 0; c < a.eigenvectors.cols(); ++c) {
    Eigen::Index lead = 0;
    while (lead < a.eigenvectors.rows() &&
           std::abs(a.eigenvectors(lead, c)) <= 1e-12)
      ++lead;
    REQUIRE(a.eigenvectors(lead, c) > 0.0);
  }
}

TEST_CASE("eigendecompose rejects asymmetric input") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 0, 1;
  REQUIRE_THROWS_AS(eigendecompose(m), NotSymmetric);
}

TEST_CASE("extended adjacency with diagonal coupling") {
  const Graph g1 = validate_graph(path3());
  const Graph g2 = validate_graph(triangle());
  const ExtendedGraph ext =
      build_extended_adjacency({g1, g2}, DiagonalCoupling{0.5});
  const Eigen::MatrixXd big = ext.assemble();
  REQUIRE(big.rows() == 6);
  REQUIRE(oracles::max_abs_diff(big.topLeftCorner(3, 3), g1.adjacency) == 0.0);
  REQUIRE(oracles::max_abs_diff(big.bottomRightCorner(3, 3), g2.adjacency) ==
          0.0);
  REQUIRE(oracles::max_abs_diff(big.block(3, 0, 3, 3),
                                0.5 * Eigen::MatrixXd::Identity(3, 3)) == 0.0);
  REQUIRE(oracles::max_abs_diff(big, big.transpose()) == 0.0);
  // the assembled matrix is itself a valid adjacency
  REQUIRE_NOTHROW(validate_graph(big));
  REQUIRE_THROWS_AS(build_extended_adjacency({g1, g2}, DiagonalCoupling{-0.1}),
                    NegativeCoupling);
}

TEST_CASE("extended adjacency with previous-frame coupling") {
  const Graph g1 = validate_graph(path3());
  const Graph g2 = validate_graph(triangle());
  const ExtendedGraph ext =
      build_extended_adjacency({g1, g2}, PreviousAdjacencyCoupling{});
  const Eigen::MatrixXd big = ext.assemble();
  REQUIRE(oracles::max_abs_diff(big.block(3, 0, 3, 3), g1.adjacency) == 0.0);
}

TEST_CASE("extended adjacency with explicit couplings validates shapes") {
  const Graph g1 = validate_graph(path3());
  const Graph g2 = validate_graph(triangle());
  Eigen::MatrixXd b(3, 3);
  b.setConstant(0.25);
  const ExtendedGraph ext =
      build_extended_adjacency({g1, g2}, ExplicitCoupling{{b}});
  REQUIRE(oracles::max_abs_diff(ext.assemble().block(3, 0, 3, 3), b) == 0.0);

  Eigen::MatrixXd bad(2, 2);
  bad.setZero();
  REQUIRE_THROWS_AS(
      build_extended_adjacency({g1, g2}, ExplicitCoupling{{bad}}),
      DimensionMismatch);
  REQUIRE_THROWS_AS(build_extended_adjacency({g1, g2}, ExplicitCoupling{{b, b}}),
                    DimensionMismatch);
}

TEST_CASE("frames of different sizes are rejected") {
  const Graph small = validate_graph(path3());
  Eigen::MatrixXd a4 = Eigen::MatrixXd::Zero(4, 4);
  a4(0, 1) = a4(1, 0) = 1.0;
  const Graph big = validate_graph(a4);
  REQUIRE_THROWS_AS(build_extended_adjacency({small, big}, DiagonalCoupling{1.0}),
                    DimensionMismatch);
}
