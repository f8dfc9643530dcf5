#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "graphkernel/experiment.hpp"

using namespace graphkernel;

namespace {

ExperimentConfig base_config() {
  ExperimentConfig cfg;
  cfg.er_n = 24;
  cfg.er_p = 0.3;
  cfg.signal_eigs = 5;
  cfg.signal_clusters = 3;
  cfg.sample_count = 14;
  cfg.snr_db = 10.0;
  cfg.master_seed = 42;
  cfg.trials = 8;
  cfg.estimator.id = "krr";
  cfg.estimator.kernels = {DiffusionMap{1.0}};
  cfg.estimator.mu = 1e-3;
  return cfg;
}

struct ThreadsGuard {
  explicit ThreadsGuard(const char* value) {
    ::setenv("GRAPHKERNEL_THREADS", value, 1);
  }
  ~ThreadsGuard() { ::unsetenv("GRAPHKERNEL_THREADS"); }
};

}  // namespace

TEST_CASE("reports do not depend on the thread budget") {
  const ExperimentConfig cfg = base_config();
  EvaluationReport serial, parallel;
  {
    ThreadsGuard guard("1");
    serial = run_experiment(cfg);
  }
  {
    ThreadsGuard guard("4");
    parallel = run_experiment(cfg);
  }
  REQUIRE(serial.trials == parallel.trials);
  REQUIRE(serial.failures == parallel.failures);
  for (std::size_t i = 0; i < cfg.trials; ++i)
    REQUIRE(serial.per_trial[i].nmse == parallel.per_trial[i].nmse);
  REQUIRE(serial.mean_nmse == parallel.mean_nmse);
}

TEST_CASE("trial results are a pure function of the trial index") {
  ExperimentConfig cfg = base_config();
  cfg.trials = 3;
  const EvaluationReport shorter = run_experiment(cfg);
  cfg.trials = 6;
  const EvaluationReport longer = run_experiment(cfg);
  for (std::size_t i = 0; i < 3; ++i)
    REQUIRE(shorter.per_trial[i].nmse == longer.per_trial[i].nmse);
}

TEST_CASE("every static estimator id produces finite errors") {
  for (const char* id :
       {"krr", "bl", "lmmse", "sp_square", "sp_eps", "mkl_rs", "mkl_kc"}) {
    ExperimentConfig cfg = base_config();
    cfg.estimator.id = id;
    cfg.estimator.bandwidth = 5;
    cfg.estimator.eps = 0.1;
    cfg.trials = 3;
    if (cfg.estimator.id == "mkl_rs" || cfg.estimator.id == "mkl_kc")
      cfg.estimator.kernels = {DiffusionMap{1.0}, RegularizedLaplacianMap{2.0},
                               PStepRandomWalkMap{48.0, 2}};
    if (cfg.estimator.id == "sp_square" || cfg.estimator.id == "sp_eps")
      cfg.sample_count = 21;  // leave every cluster observed for this seed
    const EvaluationReport report = run_experiment(cfg);
    INFO("estimator " << id << ", first error: "
                      << (report.per_trial[0].failed
                              ? report.per_trial[0].error
                              : std::string("none")));
    REQUIRE(report.failures == 0);
    REQUIRE(std::isfinite(report.mean_nmse));
    REQUIRE(report.estimator_id == id);
    for (const TrialResult& r : report.per_trial) {
      REQUIRE(!r.failed);
      REQUIRE(std::isfinite(r.nmse));
      REQUIRE(r.nmse >= 0.0);
    }
  }
}

TEST_CASE("every dynamic estimator id fills per-slot errors") {
  for (const char* id : {"ie", "kkf", "kekrikf", "mkrikf"}) {
    ExperimentConfig cfg = base_config();
    cfg.er_n = 12;
    cfg.er_p = 0.4;
    cfg.signal_eigs = 4;
    cfg.sample_count = 7;
    cfg.t_len = 4;
    cfg.trials = 2;
    cfg.estimator.id = id;
    cfg.estimator.kernels = {RegularizedLaplacianMap{1.0}};
    const EvaluationReport report = run_experiment(cfg);
    INFO("estimator " << id << ", first error: "
                      << (report.per_trial[0].failed
                              ? report.per_trial[0].error
                              : std::string("none")));
    REQUIRE(report.failures == 0);
    REQUIRE(report.mean_per_slot.size() == cfg.t_len);
    for (const TrialResult& r : report.per_trial) {
      REQUIRE(r.per_slot.size() == cfg.t_len);
      for (double e : r.per_slot) REQUIRE(std::isfinite(e));
    }
  }
}

TEST_CASE("chain filtering demands a compatible kernel map") {
  ExperimentConfig cfg = base_config();
  cfg.t_len = 3;
  cfg.estimator.id = "kkf";
  cfg.estimator.kernels = {DiffusionMap{1.0}};
  REQUIRE_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("trial failures are recorded instead of propagated") {
  ExperimentConfig cfg = base_config();
  cfg.estimator.id = "bl";
  cfg.estimator.bandwidth = 20;  // more basis columns than samples
  cfg.trials = 4;
  const EvaluationReport report = run_experiment(cfg);
  REQUIRE(report.failures == 4);
  REQUIRE(std::isnan(report.mean_nmse));
  for (const TrialResult& r : report.per_trial) {
    REQUIRE(r.failed);
    REQUIRE(!r.error.empty());
  }

  cfg.estimator.id = "no_such_estimator";
  const EvaluationReport unknown = run_experiment(cfg);
  REQUIRE(unknown.failures == cfg.trials);
  REQUIRE(unknown.per_trial[0].error.find("unknown estimator") !=
          std::string::npos);
}

TEST_CASE("explicit graph and signal override the generators") {
  ExperimentConfig cfg = base_config();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(6, 6);
  for (Eigen::Index i = 0; i + 1 < 6; ++i) {
    a(i, i + 1) = 1.0;
    a(i + 1, i) = 1.0;
  }
  cfg.graph = Graph{a};
  Eigen::VectorXd f(6);
  f << 1, 2, 3, 3, 2, 1;
  cfg.fixed_signal = f;
  cfg.sample_count = 4;
  cfg.trials = 2;
  // er_n still says 24: only the explicit 6-vertex graph can make this fit
  const EvaluationReport report = run_experiment(cfg);
  REQUIRE(report.failures == 0);
  REQUIRE(std::isfinite(report.mean_nmse));
}

TEST_CASE("configuration errors surface before any trial runs") {
  ExperimentConfig cfg = base_config();
  cfg.trials = 0;
  REQUIRE_THROWS_AS(run_experiment(cfg), ConfigError);

  ExperimentConfig bad_trend = base_config();
  bad_trend.estimator.id = "ie";
  bad_trend.estimator.kernels = {RegularizedLaplacianMap{1.0}};
  bad_trend.t_len = 2;
  bad_trend.trend_coefficient = 1.0;
  const EvaluationReport report = run_experiment(bad_trend);
  REQUIRE(report.failures == report.trials);  // trajectory rejects |a| >= 1
}
