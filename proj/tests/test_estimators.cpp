#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "graphkernel/estimators.hpp"
#include "graphkernel/graph.hpp"
#include "graphkernel/harness.hpp"
#include "graphkernel/kernels.hpp"
#include "oracles.hpp"

using namespace graphkernel;

namespace {

struct Instance {
  Graph g;
  SpectralDecomposition decomp;
  KernelMatrix kernel;
  Observation obs;
  Eigen::VectorXd f;
};

Instance make_instance(std::size_t n, std::size_t s, std::uint64_t seed,
                       double snr_db = 10.0) {
  Instance inst{generate_er_graph(n, 0.4, seed), {}, {}, {}, {}};
  inst.decomp = eigendecompose(laplacian(inst.g));
  inst.kernel = laplacian_kernel(inst.decomp, DiffusionMap{1.0});
  const SyntheticSignal sig =
      generate_synthetic_signal(inst.decomp, 5, 3, seed + 1);
  inst.f = sig.f;
  inst.obs = sample_and_corrupt(inst.f, s, snr_db, std::nullopt, seed + 2);
  return inst;
}

/// Full-dimension representer route: solve (Phi'Phi K + mu S I) a = Phi'y in
/// R^n and expand f = K a. Deliberately different shape from the library's
/// S-dimensional system.
Eigen::VectorXd representer_oracle(const KernelMatrix& kernel,
                                   const Observation& obs, double mu) {
  const Eigen::Index n = static_cast<Eigen::Index>(kernel.n());
  Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t idx : obs.mask.indices)
    selector(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(idx)) =
        1.0;
  const Eigen::MatrixXd sys =
      selector * kernel.k +
      mu * static_cast<double>(obs.mask.size()) *
          Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd rhs = mask_ops::scatter(obs.y, obs.mask, kernel.n());
  return kernel.k * sys.partialPivLu().solve(rhs);
}

/// Resample until every indicator column has at least one observed vertex, so
/// the masked basis keeps full column rank.
Observation covering_observation(const Eigen::VectorXd& f,
                                 const Eigen::MatrixXd& indicators,
                                 std::size_t s, double snr_db,
                                 std::uint64_t seed) {
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Observation obs =
        sample_and_corrupt(f, s, snr_db, std::nullopt, seed + 1000 * attempt);
    bool covered = true;
    for (Eigen::Index c = 0; c < indicators.cols() && covered; ++c) {
      double hit = 0.0;
      for (std::size_t idx : obs.mask.indices)
        hit += indicators(static_cast<Eigen::Index>(idx), c);
      covered = hit > 0.0;
    }
    if (covered) return obs;
  }
  throw std::runtime_error("covering_observation: no covering mask found");
}

double eps_objective(const Eigen::MatrixXd& k_bar, const Eigen::MatrixXd& b_bar,
                     const Eigen::VectorXd& y, double mu, double eps,
                     const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd resid = y - k_bar * alpha - b_bar * beta;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i)
    loss += std::max(0.0, std::abs(resid[i]) - eps);
  return loss / static_cast<double>(y.size()) + mu * alpha.dot(k_bar * alpha);
}

/// Brute-force subgradient descent on the eps-insensitive criterion in the
/// native (alpha, beta) coordinates; returns the best objective seen.
double eps_subgradient_oracle(const Eigen::MatrixXd& k_bar,
                              const Eigen::MatrixXd& b_bar,
                              const Eigen::VectorXd& y, double mu, double eps,
                              Eigen::VectorXd alpha, Eigen::VectorXd beta) {
  const double s = static_cast<double>(y.size());
  double best = eps_objective(k_bar, b_bar, y, mu, eps, alpha, beta);
  const double scale = std::max(1.0, y.norm());
  for (int iter = 1; iter <= 200000; ++iter) {
    const Eigen::VectorXd resid = y - k_bar * alpha - b_bar * beta;
    Eigen::VectorXd loss_sub(resid.size());
    for (Eigen::Index i = 0; i < resid.size(); ++i)
      loss_sub[i] = std::abs(resid[i]) > eps ? (resid[i] > 0 ? 1.0 : -1.0) / s
                                             : 0.0;
    const Eigen::VectorXd g_alpha =
        -k_bar * loss_sub + 2.0 * mu * (k_bar * alpha);
    const Eigen::VectorXd g_beta = -b_bar.transpose() * loss_sub;
    const double gn = std::sqrt(g_alpha.squaredNorm() + g_beta.squaredNorm());
    if (gn < 1e-14) break;
    const double step = 0.5 * scale / (gn * std::sqrt(double(iter)));
    alpha -= step * g_alpha;
    beta -= step * g_beta;
    best = std::min(best, eps_objective(k_bar, b_bar, y, mu, eps, alpha, beta));
  }
  return best;
}

}  // namespace

TEST_CASE("krr with identity kernel shrinks toward the samples") {
  const Eigen::Index n = 5;
  KernelMatrix k{Eigen::MatrixXd::Identity(n, n), "identity"};
  std::vector<std::size_t> all{0, 1, 2, 3, 4};
  Eigen::VectorXd y(n);
  y << 1, -2, 3, 0.5, -1;
  const Observation obs{make_sampling_mask(all, 5), y};
  const double mu = 0.1;
  const KrrFit fit = krr_fit(k, obs, mu);
  // (I + mu S I) alpha = y with S = 5
  REQUIRE(oracles::rel_diff(fit.f_hat, y / 1.5) < 1e-14);
}

TEST_CASE("krr agrees with the full-dimension representer route") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const Instance inst = make_instance(16, 7, 10 * seed);
    const double mu = 1e-3;
    const KrrFit fit = krr_fit(inst.kernel, inst.obs, mu);
    const Eigen::VectorXd expected =
        representer_oracle(inst.kernel, inst.obs, mu);
    REQUIRE(oracles::rel_diff(fit.f_hat, expected) < 1e-8);
  }
}

TEST_CASE("krr interpolates the samples as mu vanishes") {
  const Instance inst = make_instance(14, 6, 77);
  const KrrFit fit = krr_fit(inst.kernel, inst.obs, 1e-13);
  REQUIRE((mask_ops::select(fit.f_hat, inst.obs.mask) - inst.obs.y)
              .cwiseAbs()
              .maxCoeff() < 1e-5);
}

TEST_CASE("krr validates inputs") {
  const Instance inst = make_instance(8, 4, 5);
  REQUIRE_THROWS_AS(krr_fit(inst.kernel, inst.obs, 0.0), std::invalid_argument);
  Observation bad = inst.obs;
  bad.mask.indices.back() = 20;
  REQUIRE_THROWS_AS(krr_fit(inst.kernel, bad, 0.1), DimensionMismatch);
}

TEST_CASE("bandlimited estimate recovers bandlimited signals exactly") {
  const Graph g = generate_er_graph(20, 0.4, 31);
  const SpectralDecomposition d = eigendecompose(laplacian(g));
  std::mt19937_64 rng(9);
  const std::size_t bandwidth = 4;
  const Eigen::VectorXd coeff = oracles::random_vector(4, rng);
  const Eigen::VectorXd f = d.eigenvectors.leftCols(4) * coeff;
  const Observation obs =
      sample_and_corrupt(f, 10, std::numeric_limits<double>::infinity(),
                         std::nullopt, 4);
  const Eigen::VectorXd f_hat = bl_estimate(d, obs, bandwidth);
  REQUIRE(oracles::rel_diff(f_hat, f) < 1e-10);
}

TEST_CASE("bandlimited estimate matches a QR least-squares oracle") {
  const Instance inst = make_instance(18, 9, 111);
  const std::size_t bandwidth = 5;
  const Eigen::VectorXd f_hat = bl_estimate(inst.decomp, inst.obs, bandwidth);
  const Eigen::MatrixXd u_b = inst.decomp.eigenvectors.leftCols(5);
  const Eigen::MatrixXd m = mask_ops::select_rows(u_b, inst.obs.mask);
  const Eigen::VectorXd expected = u_b * oracles::solve_qr(m, inst.obs.y);
  REQUIRE(oracles::rel_diff(f_hat, expected) < 1e-9);
}

TEST_CASE("bandlimited estimate reports rank deficiency") {
  const Instance inst = make_instance(12, 3, 8);
  REQUIRE_THROWS_AS(bl_estimate(inst.decomp, inst.obs, 6), RankDeficient);
  REQUIRE_THROWS_AS(bl_estimate(inst.decomp, inst.obs, 0),
                    std::invalid_argument);
}

TEST_CASE("lmmse with identity covariance and no noise returns the samples") {
  const Eigen::Index n = 4;
  KernelMatrix c{Eigen::MatrixXd::Identity(n, n), "identity"};
  Eigen::VectorXd y(n);
  y << 4, 3, 2, 1;
  const Observation obs{make_sampling_mask({0, 1, 2, 3}, 4), y};
  REQUIRE(oracles::rel_diff(lmmse_estimate(c, obs, 0.0), y) < 1e-14);
}

TEST_CASE("lmmse coincides with krr when the prior matches the kernel") {
  for (std::uint64_t seed : {11, 22, 33}) {
    const Instance inst = make_instance(15, 6, seed);
    const double mu = 2e-3;
    const double sigma_e2 = mu * static_cast<double>(inst.obs.mask.size());
    const Eigen::VectorXd a = krr_fit(inst.kernel, inst.obs, mu).f_hat;
    const Eigen::VectorXd b = lmmse_estimate(inst.kernel, inst.obs, sigma_e2);
    REQUIRE(oracles::rel_diff(a, b) < 1e-12);
  }
}

TEST_CASE("lmmse flags a singular system") {
  KernelMatrix zero{Eigen::MatrixXd::Zero(3, 3), "zero"};
  Eigen::VectorXd y(2);
  y << 1, 2;
  const Observation obs{make_sampling_mask({0, 2}, 3), y};
  REQUIRE_THROWS_AS(lmmse_estimate(zero, obs, 0.0), SingularSystem);
}

TEST_CASE("semiparametric square solution solves the joint KKT system") {
  for (std::uint64_t seed : {3, 14, 15}) {
    const Instance inst = make_instance(16, 8, seed);
    const SyntheticSignal sig =
        generate_synthetic_signal(inst.decomp, 5, 3, seed + 1);
    const ParametricBasis basis = make_parametric_basis(sig.indicators);
    const Observation obs =
        covering_observation(inst.f, sig.indicators, 8, 10.0, seed + 2);
    const double mu = 5e-3;
    const SemiparametricFit fit =
        semiparametric_fit_square(inst.kernel, basis, obs, mu);

    const Eigen::MatrixXd k_bar =
        mask_ops::select_block(inst.kernel.k, obs.mask);
    const Eigen::MatrixXd b_bar = mask_ops::select_rows(basis.b, obs.mask);
    const Eigen::Index s = k_bar.rows(), m = b_bar.cols();
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + m, s + m);
    kkt.topLeftCorner(s, s) =
        k_bar + mu * static_cast<double>(s) * Eigen::MatrixXd::Identity(s, s);
    kkt.topRightCorner(s, m) = b_bar;
    kkt.bottomLeftCorner(m, s) = b_bar.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + m);
    rhs.head(s) = obs.y;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);

    REQUIRE(oracles::rel_diff(fit.alpha, sol.head(s)) < 1e-8);
    REQUIRE(oracles::rel_diff(fit.beta, sol.tail(m)) < 1e-8);
    // the kernel part stays orthogonal to the basis directions
    REQUIRE((b_bar.transpose() * fit.alpha).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("semiparametric square with a spanning basis interpolates") {
  const Instance inst = make_instance(10, 3, 42);
  // basis columns span the sampled coordinates: kernel part must vanish
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(10, 3);
  for (std::size_t i = 0; i < 3; ++i)
    b(static_cast<Eigen::Index>(inst.obs.mask.indices[i]),
      static_cast<Eigen::Index>(i)) = 1.0;
  const SemiparametricFit fit = semiparametric_fit_square(
      inst.kernel, make_parametric_basis(b), inst.obs, 1e-2);
  REQUIRE(fit.alpha.cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((mask_ops::select(fit.f_hat, inst.obs.mask) - inst.obs.y)
              .cwiseAbs()
              .maxCoeff() < 1e-10);
}

TEST_CASE("semiparametric estimators reject rank-deficient bases") {
  const Instance inst = make_instance(12, 5, 19);
  Eigen::MatrixXd b(12, 2);
  b.col(0).setOnes();
  b.col(1).setOnes();  // duplicate column
  const ParametricBasis basis = make_parametric_basis(b);
  REQUIRE_THROWS_AS(
      semiparametric_fit_square(inst.kernel, basis, inst.obs, 1e-3),
      RankDeficientBasis);
  REQUIRE_THROWS_AS(
      semiparametric_fit_eps(inst.kernel, basis, inst.obs, 1e-3, 0.1),
      RankDeficientBasis);
}

TEST_CASE("eps fit with a wide tube reduces to the parametric fit") {
  const Instance inst = make_instance(14, 7, 23);
  Eigen::MatrixXd b(14, 2);
  b.col(0).setOnes();
  for (Eigen::Index i = 0; i < 14; ++i) b(i, 1) = static_cast<double>(i) / 14.0;
  const ParametricBasis basis = make_parametric_basis(b);
  const double eps = 1e3;  // every residual of the LS fit is inside the tube
  const SemiparametricFit fit =
      semiparametric_fit_eps(inst.kernel, basis, inst.obs, 1e-3, eps);
  REQUIRE(fit.alpha.cwiseAbs().maxCoeff() < 1e-9);
  REQUIRE_THAT(fit.objective, Catch::Matchers::WithinAbs(0.0, 1e-12));
  // beta equals the plain least-squares fit
  const Eigen::MatrixXd b_bar = mask_ops::select_rows(b, inst.obs.mask);
  const Eigen::VectorXd expected = oracles::solve_qr(b_bar, inst.obs.y);
  REQUIRE(oracles::rel_diff(fit.beta, expected) < 1e-6);
}

TEST_CASE("eps fit objective is non-increasing and matches its coefficients") {
  const Instance inst = make_instance(15, 8, 29, 5.0);
  const SyntheticSignal sig = generate_synthetic_signal(inst.decomp, 5, 3, 30);
  const ParametricBasis basis = make_parametric_basis(sig.indicators);
  const Observation obs = covering_observation(inst.f, sig.indicators, 8, 5.0, 31);
  const double mu = 1e-2, eps = 0.2;
  const SemiparametricFit fit =
      semiparametric_fit_eps(inst.kernel, basis, obs, mu, eps);

  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
    REQUIRE(fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-15);

  const Eigen::MatrixXd k_bar =
      mask_ops::select_block(inst.kernel.k, obs.mask);
  const Eigen::MatrixXd b_bar = mask_ops::select_rows(basis.b, obs.mask);
  const double replayed =
      eps_objective(k_bar, b_bar, obs.y, mu, eps, fit.alpha, fit.beta);
  REQUIRE_THAT(replayed, Catch::Matchers::WithinAbs(fit.objective, 1e-9));
}

TEST_CASE("eps fit reaches the subgradient-descent objective") {
  for (std::uint64_t seed : {5, 17}) {
    const Instance inst = make_instance(12, 6, seed, 5.0);
    const SyntheticSignal sig =
        generate_synthetic_signal(inst.decomp, 4, 2, seed + 1);
    const ParametricBasis basis = make_parametric_basis(sig.indicators);
    const double mu = 1e-2, eps = 0.1;
    const SemiparametricFit fit =
        semiparametric_fit_eps(inst.kernel, basis, inst.obs, mu, eps);

    const Eigen::MatrixXd k_bar =
        mask_ops::select_block(inst.kernel.k, inst.obs.mask);
    const Eigen::MatrixXd b_bar = mask_ops::select_rows(basis.b, inst.obs.mask);
    const SemiparametricFit warm =
        semiparametric_fit_square(inst.kernel, basis, inst.obs, mu);
    const double oracle = eps_subgradient_oracle(
        k_bar, b_bar, inst.obs.y, mu, eps, warm.alpha, warm.beta);
    // the exact solver must do at least as well as brute force, up to the
    // oracle's own resolution
    REQUIRE(fit.objective <= oracle + 1e-4 * std::max(1.0, oracle));
  }
}

TEST_CASE("eps fit at zero width minimizes the absolute loss") {
  const Instance inst = make_instance(12, 6, 41, 5.0);
  const SyntheticSignal sig = generate_synthetic_signal(inst.decomp, 4, 2, 42);
  const ParametricBasis basis = make_parametric_basis(sig.indicators);
  const double mu = 1e-2;
  const SemiparametricFit l1 =
      semiparametric_fit_eps(inst.kernel, basis, inst.obs, mu, 0.0);
  const SemiparametricFit sq =
      semiparametric_fit_square(inst.kernel, basis, inst.obs, mu);
  const Eigen::MatrixXd k_bar =
      mask_ops::select_block(inst.kernel.k, inst.obs.mask);
  const Eigen::MatrixXd b_bar = mask_ops::select_rows(basis.b, inst.obs.mask);
  const double l1_at_l1 =
      eps_objective(k_bar, b_bar, inst.obs.y, mu, 0.0, l1.alpha, l1.beta);
  const double l1_at_sq =
      eps_objective(k_bar, b_bar, inst.obs.y, mu, 0.0, sq.alpha, sq.beta);
  REQUIRE(l1_at_l1 <= l1_at_sq + 1e-10);
}

TEST_CASE("eps fit validates its parameters") {
  const Instance inst = make_instance(10, 5, 3);
  const ParametricBasis basis =
      make_parametric_basis(Eigen::MatrixXd::Ones(10, 1));
  REQUIRE_THROWS_AS(
      semiparametric_fit_eps(inst.kernel, basis, inst.obs, 1e-3, -0.1),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      semiparametric_fit_eps(inst.kernel, basis, inst.obs, 0.0, 0.1),
      std::invalid_argument);
}
