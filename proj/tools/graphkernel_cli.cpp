// Command-line front end: graph generation/validation, kernel construction,
// signal reconstruction (static, batch space-time, online filtered),
// Monte-Carlo simulation, and NMSE evaluation.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 runtime failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "graphkernel/graphkernel.hpp"
#include "graphkernel/io.hpp"

namespace gk = graphkernel;

namespace {

gk::SpectralMapSpec parse_map(const std::string& text) {
  return gk::io::spectral_map_from_string(text);
}

int cmd_graph_gen(const std::string& kind, std::size_t n, double p,
                  std::uint64_t seed, const std::string& out) {
  if (kind != "er") throw gk::ConfigError("unknown graph kind: " + kind);
  const gk::Graph g = gk::generate_er_graph(n, p, seed);
  gk::io::write_graph_csv(out, g);
  std::cout << "wrote er graph n=" << n << " p=" << p << " to " << out << "\n";
  return 0;
}

int cmd_graph_validate(const std::string& in) {
  const gk::Graph g = gk::io::read_graph(in);
  std::size_t edges = 0;
  for (Eigen::Index i = 0; i < g.adjacency.rows(); ++i)
    for (Eigen::Index j = i + 1; j < g.adjacency.cols(); ++j)
      if (g.adjacency(i, j) != 0.0) ++edges;
  std::cout << "ok n=" << g.n() << " edges=" << edges << "\n";
  return 0;
}

int cmd_kernel_build(const std::string& graph_path, const std::string& map_json,
                     const std::string& out) {
  const gk::Graph g = gk::io::read_graph(graph_path);
  const gk::SpectralDecomposition decomp =
      gk::eigendecompose(gk::laplacian(g));
  const gk::KernelMatrix k = gk::laplacian_kernel(decomp, parse_map(map_json));
  gk::io::write_matrix_csv(out, k.k);
  std::cout << "wrote kernel " << k.provenance << " (n=" << k.n() << ") to "
            << out << "\n";
  return 0;
}

int cmd_reconstruct_static(const std::string& graph_path,
                           const std::string& obs_path,
                           const std::string& estimator,
                           const std::string& map_json, double mu,
                           std::size_t bandwidth, double eps,
                           std::optional<double> sigma_e2,
                           const std::string& basis_path,
                           const std::string& out) {
  const gk::Graph g = gk::io::read_graph(graph_path);
  const gk::SpectralDecomposition decomp =
      gk::eigendecompose(gk::laplacian(g));
  const gk::Observation obs = gk::io::read_observation_csv(obs_path, g.n());

  Eigen::VectorXd f_hat;
  if (estimator == "bl") {
    f_hat = gk::bl_estimate(decomp, obs, bandwidth);
  } else {
    const gk::KernelMatrix kernel =
        gk::laplacian_kernel(decomp, parse_map(map_json));
    if (estimator == "krr") {
      f_hat = gk::krr_fit(kernel, obs, mu).f_hat;
    } else if (estimator == "lmmse") {
      if (!sigma_e2)
        throw gk::ConfigError("lmmse needs --sigma-e2");
      f_hat = gk::lmmse_estimate(kernel, obs, *sigma_e2);
    } else if (estimator == "sp_square" || estimator == "sp_eps") {
      if (basis_path.empty())
        throw gk::ConfigError(estimator + " needs --basis");
      const gk::ParametricBasis basis =
          gk::make_parametric_basis(gk::io::read_matrix_csv(basis_path));
      f_hat = estimator == "sp_square"
                  ? gk::semiparametric_fit_square(kernel, basis, obs, mu).f_hat
                  : gk::semiparametric_fit_eps(kernel, basis, obs, mu, eps)
                        .f_hat;
    } else {
      throw gk::ConfigError("unknown static estimator: " + estimator);
    }
  }
  gk::io::write_vector_csv(out, f_hat);
  std::cout << "wrote " << estimator << " estimate (n=" << f_hat.size()
            << ") to " << out << "\n";
  return 0;
}

// Shared by batch and online reconstruction: extended graph with diagonal
// coupling, regularized-Laplacian spectral map (its inverse kernel stays
// block tridiagonal, which the online filter requires).
struct SpaceTimePieces {
  gk::TimeSeriesObservations obs;
  gk::BlockTridiagonalMatrix precision;
};

SpaceTimePieces build_space_time(const std::string& graph_path,
                                 const std::string& series_path,
                                 double coupling_alpha, double sigma2) {
  const gk::Graph g = gk::io::read_graph(graph_path);
  gk::TimeSeriesObservations obs = gk::io::read_time_series_csv(series_path);
  if (obs.n != g.n())
    throw gk::ConfigError("time series n does not match the graph");
  const std::vector<gk::Graph> frames(obs.t_len(), g);
  const gk::ExtendedGraph ext = gk::build_extended_adjacency(
      frames, gk::DiagonalCoupling{coupling_alpha});
  const Eigen::MatrixXd a_ext = ext.assemble();
  const Eigen::MatrixXd lap =
      Eigen::MatrixXd(a_ext.rowwise().sum().asDiagonal()) - a_ext;
  const Eigen::Index n = static_cast<Eigen::Index>(g.n());
  std::vector<Eigen::MatrixXd> diag_blocks, off_blocks;
  for (std::size_t t = 0; t < obs.t_len(); ++t) {
    Eigen::MatrixXd d = sigma2 * lap.block(static_cast<Eigen::Index>(t) * n,
                                           static_cast<Eigen::Index>(t) * n, n,
                                           n);
    d.diagonal().array() += 1.0;
    diag_blocks.push_back(d);
    if (t >= 1)
      off_blocks.push_back(
          sigma2 * lap.block(static_cast<Eigen::Index>(t) * n,
                             static_cast<Eigen::Index>(t - 1) * n, n, n));
  }
  return SpaceTimePieces{
      std::move(obs),
      gk::make_block_tridiagonal(std::move(diag_blocks), std::move(off_blocks))};
}

int cmd_reconstruct_batch(const std::string& graph_path,
                          const std::string& series_path, double mu,
                          double coupling_alpha, double sigma2,
                          const std::string& out) {
  const SpaceTimePieces pieces =
      build_space_time(graph_path, series_path, coupling_alpha, sigma2);
  const gk::KernelMatrix kernel =
      gk::space_time_kernel_from_inverse(pieces.precision);
  const Eigen::VectorXd f_hat =
      gk::batch_space_time_fit(kernel, pieces.obs, mu);
  gk::io::write_vector_csv(out, f_hat);
  std::cout << "wrote batch estimate (" << pieces.obs.t_len() << " slots of "
            << pieces.obs.n << ") to " << out << "\n";
  return 0;
}

int cmd_reconstruct_online(const std::string& graph_path,
                           const std::string& series_path, double mu,
                           double coupling_alpha, double sigma2,
                           const std::string& out) {
  const SpaceTimePieces pieces =
      build_space_time(graph_path, series_path, coupling_alpha, sigma2);
  const gk::KkfParameters params = gk::kkf_parameters(pieces.precision);
  Eigen::VectorXd noise(static_cast<Eigen::Index>(pieces.obs.t_len()));
  for (std::size_t t = 0; t < pieces.obs.t_len(); ++t)
    noise[static_cast<Eigen::Index>(t)] =
        mu * static_cast<double>(pieces.obs.slots[t].mask.size());
  const std::vector<gk::KkfState> states =
      gk::kkf_run(params, pieces.obs, noise);
  Eigen::VectorXd flat(static_cast<Eigen::Index>(pieces.obs.n *
                                                 pieces.obs.t_len()));
  for (std::size_t t = 0; t < states.size(); ++t)
    flat.segment(static_cast<Eigen::Index>(t * pieces.obs.n),
                 static_cast<Eigen::Index>(pieces.obs.n)) = states[t].f_hat;
  gk::io::write_vector_csv(out, flat);
  std::cout << "wrote online filtered estimates (" << pieces.obs.t_len()
            << " slots of " << pieces.obs.n << ") to " << out << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_json,
                 const std::string& out_csv) {
  const gk::ExperimentConfig cfg = gk::io::read_experiment_config(config_path);
  const gk::EvaluationReport report = gk::run_experiment(cfg);
  if (!out_json.empty()) gk::io::write_report_json(out_json, report);
  if (!out_csv.empty()) gk::io::write_report_csv(out_csv, report);
  std::cout << "estimator=" << report.estimator_id
            << " trials=" << report.trials << " failures=" << report.failures
            << " mean_nmse=" << report.mean_nmse << "\n";
  return 0;
}

int cmd_eval_nmse(const std::string& estimate_path,
                  const std::string& reference_path) {
  const Eigen::VectorXd f_hat = gk::io::read_vector_csv(estimate_path);
  const Eigen::VectorXd f = gk::io::read_vector_csv(reference_path);
  std::cout << gk::io::format_double(gk::nmse(f_hat, f)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel reconstruction of graph signals"};
  app.require_subcommand(1);

  // graph gen | graph validate
  CLI::App* graph = app.add_subcommand("graph", "graph utilities");
  graph->require_subcommand(1);
  CLI::App* gen = graph->add_subcommand("gen", "generate a random graph");
  std::string gen_kind = "er", gen_out;
  std::size_t gen_n = 100;
  double gen_p = 0.2;
  std::uint64_t gen_seed = 0;
  gen->add_option("--kind", gen_kind, "generator kind (er)");
  gen->add_option("--n", gen_n, "vertex count")->required();
  gen->add_option("--p", gen_p, "edge probability");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--out", gen_out, "output adjacency csv")->required();

  CLI::App* validate = graph->add_subcommand("validate", "validate adjacency");
  std::string validate_in;
  validate->add_option("--in", validate_in, "adjacency csv or json")->required();

  // kernel build
  CLI::App* kernel = app.add_subcommand("kernel", "kernel utilities");
  kernel->require_subcommand(1);
  CLI::App* kbuild = kernel->add_subcommand("build", "build a Laplacian kernel");
  std::string kb_graph, kb_map, kb_out;
  kbuild->add_option("--graph", kb_graph, "adjacency csv or json")->required();
  kbuild->add_option("--map", kb_map, "spectral map json")->required();
  kbuild->add_option("--out", kb_out, "output kernel csv")->required();

  // reconstruct static | batch | online
  CLI::App* rec = app.add_subcommand("reconstruct", "signal reconstruction");
  rec->require_subcommand(1);

  CLI::App* rstatic = rec->add_subcommand("static", "single-snapshot estimate");
  std::string rs_graph, rs_obs, rs_est = "krr", rs_map, rs_basis, rs_out;
  double rs_mu = 1e-3, rs_eps = 0.1;
  std::size_t rs_bandwidth = 10;
  double rs_sigma_e2 = -1.0;
  bool rs_has_sigma = false;
  rstatic->add_option("--graph", rs_graph)->required();
  rstatic->add_option("--obs", rs_obs, "observation csv (index,value)")->required();
  rstatic->add_option("--estimator", rs_est,
                      "krr | bl | lmmse | sp_square | sp_eps");
  rstatic->add_option("--map", rs_map, "spectral map json");
  rstatic->add_option("--mu", rs_mu, "ridge weight");
  rstatic->add_option("--bandwidth", rs_bandwidth, "bl bandwidth");
  rstatic->add_option("--eps", rs_eps, "insensitivity width");
  rstatic->add_option("--sigma-e2", rs_sigma_e2, "lmmse noise variance")
      ->each([&](const std::string&) { rs_has_sigma = true; });
  rstatic->add_option("--basis", rs_basis, "parametric basis csv");
  rstatic->add_option("--out", rs_out)->required();

  CLI::App* rbatch = rec->add_subcommand("batch", "space-time batch estimate");
  std::string rb_graph, rb_series, rb_out;
  double rb_mu = 1e-3, rb_alpha = 0.9, rb_sigma2 = 1.0;
  rbatch->add_option("--graph", rb_graph)->required();
  rbatch->add_option("--series", rb_series, "time series csv")->required();
  rbatch->add_option("--mu", rb_mu);
  rbatch->add_option("--coupling-alpha", rb_alpha, "temporal link weight");
  rbatch->add_option("--sigma2", rb_sigma2, "regularized-map weight");
  rbatch->add_option("--out", rb_out)->required();

  CLI::App* ronline = rec->add_subcommand("online", "filtered estimates");
  std::string ro_graph, ro_series, ro_out;
  double ro_mu = 1e-3, ro_alpha = 0.9, ro_sigma2 = 1.0;
  ronline->add_option("--graph", ro_graph)->required();
  ronline->add_option("--series", ro_series, "time series csv")->required();
  ronline->add_option("--mu", ro_mu);
  ronline->add_option("--coupling-alpha", ro_alpha, "temporal link weight");
  ronline->add_option("--sigma2", ro_sigma2, "regularized-map weight");
  ronline->add_option("--out", ro_out)->required();

  // simulate
  CLI::App* sim = app.add_subcommand("simulate", "run a Monte-Carlo experiment");
  std::string sim_config, sim_out, sim_csv;
  sim->add_option("--config", sim_config, "experiment json")->required();
  sim->add_option("--out", sim_out, "report json");
  sim->add_option("--csv", sim_csv, "per-trial csv");

  // eval nmse
  CLI::App* eval = app.add_subcommand("eval", "evaluation utilities");
  eval->require_subcommand(1);
  CLI::App* ev_nmse = eval->add_subcommand("nmse", "normalized squared error");
  std::string ev_est, ev_ref;
  ev_nmse->add_option("--estimate", ev_est)->required();
  ev_nmse->add_option("--reference", ev_ref)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_graph_gen(gen_kind, gen_n, gen_p, gen_seed, gen_out);
    if (validate->parsed()) return cmd_graph_validate(validate_in);
    if (kbuild->parsed()) return cmd_kernel_build(kb_graph, kb_map, kb_out);
    if (rstatic->parsed())
      return cmd_reconstruct_static(
          rs_graph, rs_obs, rs_est, rs_map, rs_mu, rs_bandwidth, rs_eps,
          rs_has_sigma ? std::optional<double>(rs_sigma_e2) : std::nullopt,
          rs_basis, rs_out);
    if (rbatch->parsed())
      return cmd_reconstruct_batch(rb_graph, rb_series, rb_mu, rb_alpha,
                                   rb_sigma2, rb_out);
    if (ronline->parsed())
      return cmd_reconstruct_online(ro_graph, ro_series, ro_mu, ro_alpha,
                                    ro_sigma2, ro_out);
    if (sim->parsed()) return cmd_simulate(sim_config, sim_out, sim_csv);
    if (ev_nmse->parsed()) return cmd_eval_nmse(ev_est, ev_ref);
  } catch (const gk::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}
