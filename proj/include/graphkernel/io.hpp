#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphkernel/errors.hpp"
#include "graphkernel/experiment.hpp"
#include "graphkernel/graph.hpp"
#include "graphkernel/kernels.hpp"
#include "graphkernel/observation.hpp"

namespace graphkernel {
namespace io {

using nlohmann::json;

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline double parse_double(const std::string& field, const std::string& where) {
  if (field.empty()) throw IoError("empty numeric field in " + where);
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size())
    throw IoError("bad numeric field '" + field + "' in " + where);
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

// ---- dense matrices and vectors (CSV) ----

inline void write_matrix_csv(const std::string& path,
                             const Eigen::MatrixXd& m) {
  std::ofstream out = open_out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const std::string& f : fields) row.push_back(parse_double(f, path));
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("no data in " + path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return m;
}

inline void write_vector_csv(const std::string& path,
                             const Eigen::VectorXd& v) {
  std::ofstream out = open_out(path);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out << format_double(v[i]) << '\n';
}

inline Eigen::VectorXd read_vector_csv(const std::string& path) {
  const Eigen::MatrixXd m = read_matrix_csv(path);
  if (m.cols() != 1) throw IoError("expected one column in " + path);
  return m.col(0);
}

// ---- graphs ----

inline void write_graph_csv(const std::string& path, const Graph& g) {
  write_matrix_csv(path, g.adjacency);
}

inline Graph read_graph_csv(const std::string& path) {
  return validate_graph(read_matrix_csv(path));
}

inline json graph_to_json(const Graph& g) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < g.adjacency.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < g.adjacency.cols(); ++j)
      row.push_back(g.adjacency(i, j));
    rows.push_back(std::move(row));
  }
  return json{{"n", g.n()}, {"adjacency", std::move(rows)}};
}

inline Graph graph_from_json(const json& j) {
  if (!j.contains("adjacency") || !j["adjacency"].is_array())
    throw IoError("graph json needs an 'adjacency' array");
  const auto& rows = j["adjacency"];
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != n)
      throw IoError("graph json adjacency is not square");
    for (Eigen::Index jx = 0; jx < n; ++jx)
      a(i, jx) = row[static_cast<std::size_t>(jx)].get<double>();
  }
  return validate_graph(a);
}

/// Dispatch on extension: .json or anything else (CSV).
inline Graph read_graph(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    std::ifstream in = open_in(path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw IoError(std::string("bad json in ") + path + ": " + e.what());
    }
    return graph_from_json(j);
  }
  return read_graph_csv(path);
}

// ---- observations ----

inline void write_observation_csv(const std::string& path,
                                  const Observation& obs) {
  std::ofstream out = open_out(path);
  for (std::size_t s = 0; s < obs.mask.size(); ++s)
    out << obs.mask.indices[s] << ','
        << format_double(obs.y[static_cast<Eigen::Index>(s)]) << '\n';
}

inline Observation read_observation_csv(const std::string& path,
                                        std::size_t n) {
  std::ifstream in = open_in(path);
  std::vector<std::size_t> indices;
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != 2)
      throw IoError("expected 'index,value' rows in " + path);
    indices.push_back(
        static_cast<std::size_t>(parse_double(fields[0], path)));
    values.push_back(parse_double(fields[1], path));
  }
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(
      values.data(), static_cast<Eigen::Index>(values.size()));
  return make_observation(make_sampling_mask(std::move(indices), n), y);
}

/// Header line "n,t_len", then rows "t,index,value" with 0-based t.
inline void write_time_series_csv(const std::string& path,
                                  const TimeSeriesObservations& obs) {
  std::ofstream out = open_out(path);
  out << obs.n << ',' << obs.t_len() << '\n';
  for (std::size_t t = 0; t < obs.t_len(); ++t)
    for (std::size_t s = 0; s < obs.slots[t].mask.size(); ++s)
      out << t << ',' << obs.slots[t].mask.indices[s] << ','
          << format_double(obs.slots[t].y[static_cast<Eigen::Index>(s)])
          << '\n';
}

inline TimeSeriesObservations read_time_series_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty time series in " + path);
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() != 2) throw IoError("expected 'n,t_len' header in " + path);
  const std::size_t n =
      static_cast<std::size_t>(parse_double(header[0], path));
  const std::size_t t_len =
      static_cast<std::size_t>(parse_double(header[1], path));
  if (t_len == 0) throw IoError("t_len must be >= 1 in " + path);

  std::vector<std::vector<std::size_t>> indices(t_len);
  std::vector<std::vector<double>> values(t_len);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != 3)
      throw IoError("expected 't,index,value' rows in " + path);
    const std::size_t t =
        static_cast<std::size_t>(parse_double(fields[0], path));
    if (t >= t_len) throw IoError("slot index out of range in " + path);
    indices[t].push_back(
        static_cast<std::size_t>(parse_double(fields[1], path)));
    values[t].push_back(parse_double(fields[2], path));
  }
  std::vector<Observation> slots;
  slots.reserve(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(
        values[t].data(), static_cast<Eigen::Index>(values[t].size()));
    slots.push_back(
        make_observation(make_sampling_mask(std::move(indices[t]), n), y));
  }
  return make_time_series(n, std::move(slots));
}

// ---- spectral map specs ----

inline json spectral_map_to_json(const SpectralMapSpec& spec) {
  json j;
  if (const auto* d = std::get_if<DiffusionMap>(&spec)) {
    j["kind"] = "diffusion";
    j["sigma2"] = d->sigma2;
  } else if (const auto* ps = std::get_if<PStepRandomWalkMap>(&spec)) {
    j["kind"] = "p_step_random_walk";
    j["a"] = ps->a;
    j["p"] = ps->p;
  } else if (const auto* r = std::get_if<RegularizedLaplacianMap>(&spec)) {
    j["kind"] = "regularized_laplacian";
    j["sigma2"] = r->sigma2;
  } else if (const auto* b = std::get_if<BandlimitedMap>(&spec)) {
    j["kind"] = "bandlimited";
    j["beta"] = b->beta;
    j["lambda_max"] = b->lambda_max;
  } else if (const auto* br = std::get_if<BandRejectMap>(&spec)) {
    j["kind"] = "band_reject";
    j["k"] = br->k;
    j["l"] = br->l;
    j["beta"] = br->beta;
  }
  return j;
}

inline SpectralMapSpec spectral_map_from_json(const json& j) {
  if (!j.contains("kind")) throw ConfigError("spectral map json needs 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  SpectralMapSpec spec;
  if (kind == "diffusion") {
    spec = DiffusionMap{j.value("sigma2", 1.0)};
  } else if (kind == "p_step_random_walk") {
    spec = PStepRandomWalkMap{j.value("a", 2.0), j.value("p", 1.0)};
  } else if (kind == "regularized_laplacian") {
    spec = RegularizedLaplacianMap{j.value("sigma2", 1.0)};
  } else if (kind == "bandlimited") {
    spec = BandlimitedMap{j.value("beta", 1.0), j.value("lambda_max", 0.0)};
  } else if (kind == "band_reject") {
    spec = BandRejectMap{j.value("k", std::size_t{1}),
                         j.value("l", std::size_t{0}), j.value("beta", 1.0)};
  } else {
    throw ConfigError("unknown spectral map kind: " + kind);
  }
  validate_spec(spec);
  return spec;
}

inline SpectralMapSpec spectral_map_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad spectral map json: ") + e.what());
  }
  return spectral_map_from_json(j);
}

// ---- transitions ----

/// {"kind":"scaled_identity","alpha":a} -> a*I
/// {"kind":"scaled_adjacency","alpha":a} -> a*A normalized by the largest
/// absolute eigenvalue of A, so the transition is never expansive.
inline Eigen::MatrixXd transition_from_json(const json& j, const Graph& g) {
  if (!j.contains("kind")) throw ConfigError("transition json needs 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  const double alpha = j.value("alpha", 1.0);
  const Eigen::Index n = static_cast<Eigen::Index>(g.n());
  if (kind == "scaled_identity")
    return alpha * Eigen::MatrixXd::Identity(n, n);
  if (kind == "scaled_adjacency") {
    const double radius =
        linalg::sym_eig(g.adjacency).values.cwiseAbs().maxCoeff();
    if (radius == 0.0) return Eigen::MatrixXd::Zero(n, n);
    return (alpha / radius) * g.adjacency;
  }
  throw ConfigError("unknown transition kind: " + kind);
}

// ---- experiment configuration ----

inline OutlierSpec outliers_from_json(const json& j) {
  OutlierSpec o;
  o.probability = j.value("probability", 0.0);
  o.variance = j.value("variance", 0.0);
  return o;
}

inline EstimatorSpec estimator_from_json(const json& j) {
  EstimatorSpec e;
  if (!j.contains("id")) throw ConfigError("estimator json needs 'id'");
  e.id = j["id"].get<std::string>();
  if (j.contains("kernel")) e.kernels.push_back(spectral_map_from_json(j["kernel"]));
  if (j.contains("kernels"))
    for (const auto& k : j["kernels"])
      e.kernels.push_back(spectral_map_from_json(k));
  if (j.contains("kernels_eta"))
    for (const auto& k : j["kernels_eta"])
      e.kernels_eta.push_back(spectral_map_from_json(k));
  e.mu = j.value("mu", e.mu);
  e.bandwidth = j.value("bandwidth", e.bandwidth);
  e.eps = j.value("eps", e.eps);
  if (j.contains("sigma_e2")) e.sigma_e2 = j["sigma_e2"].get<double>();
  e.mu1 = j.value("mu1", e.mu1);
  e.mu2 = j.value("mu2", e.mu2);
  e.rho_nu = j.value("rho_nu", e.rho_nu);
  e.rho_eta = j.value("rho_eta", e.rho_eta);
  e.coupling_alpha = j.value("coupling_alpha", e.coupling_alpha);
  e.transition_alpha = j.value("transition_alpha", e.transition_alpha);
  if (j.contains("mkl")) {
    const json& m = j["mkl"];
    e.mkl.rho_admm = m.value("rho_admm", e.mkl.rho_admm);
    e.mkl.max_iters = m.value("max_iters", e.mkl.max_iters);
    e.mkl.tol_primal = m.value("tol_primal", e.mkl.tol_primal);
    e.mkl.tol_dual = m.value("tol_dual", e.mkl.tol_dual);
    e.mkl.alt_min_rounds = m.value("alt_min_rounds", e.mkl.alt_min_rounds);
    e.mkl.rho_theta = m.value("rho_theta", e.mkl.rho_theta);
  }
  return e;
}

inline ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("graph")) {
    const json& g = j["graph"];
    const std::string kind = g.value("kind", std::string("er"));
    if (kind == "er") {
      cfg.er_n = g.value("n", cfg.er_n);
      cfg.er_p = g.value("p", cfg.er_p);
    } else if (kind == "file") {
      cfg.graph = read_graph(g.value("path", std::string()));
    } else if (kind == "adjacency") {
      cfg.graph = graph_from_json(g);
    } else {
      throw ConfigError("unknown graph kind: " + kind);
    }
  }
  if (j.contains("signal")) {
    const json& s = j["signal"];
    if (s.contains("path"))
      cfg.fixed_signal = read_vector_csv(s["path"].get<std::string>());
    cfg.signal_eigs = s.value("eigenvectors", cfg.signal_eigs);
    cfg.signal_clusters = s.value("clusters", cfg.signal_clusters);
    cfg.t_len = s.value("t_len", cfg.t_len);
    cfg.trend_coefficient = s.value("trend_coefficient", cfg.trend_coefficient);
  }
  if (j.contains("sampling")) {
    const json& s = j["sampling"];
    cfg.sample_count = s.value("count", cfg.sample_count);
    if (s.contains("snr_db")) {
      if (s["snr_db"].is_string()) {
        if (s["snr_db"].get<std::string>() != "inf")
          throw ConfigError("snr_db must be a number or \"inf\"");
        cfg.snr_db = std::numeric_limits<double>::infinity();
      } else {
        cfg.snr_db = s["snr_db"].get<double>();
      }
    }
    if (s.contains("outliers")) cfg.outliers = outliers_from_json(s["outliers"]);
  }
  if (!j.contains("estimator")) throw ConfigError("config needs 'estimator'");
  cfg.estimator = estimator_from_json(j["estimator"]);
  cfg.master_seed = j.value("seed", cfg.master_seed);
  cfg.trials = j.value("trials", cfg.trials);
  return cfg;
}

inline ExperimentConfig read_experiment_config(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config json: ") + e.what());
  }
  return experiment_from_json(j);
}

// ---- reports ----

inline json report_to_json(const EvaluationReport& report) {
  json trials = json::array();
  for (std::size_t i = 0; i < report.per_trial.size(); ++i) {
    const TrialResult& r = report.per_trial[i];
    json t{{"trial", i}, {"failed", r.failed}};
    if (r.failed)
      t["error"] = r.error;
    else
      t["nmse"] = r.nmse;
    if (!r.per_slot.empty()) t["per_slot_nmse"] = r.per_slot;
    trials.push_back(std::move(t));
  }
  json j{{"estimator", report.estimator_id},
         {"seed", report.master_seed},
         {"trials", report.trials},
         {"failures", report.failures},
         {"mean_nmse", report.mean_nmse},
         {"runtime_seconds", report.runtime_seconds},
         {"per_trial", std::move(trials)}};
  if (!report.mean_per_slot.empty()) j["mean_per_slot_nmse"] = report.mean_per_slot;
  return j;
}

inline void write_report_json(const std::string& path,
                              const EvaluationReport& report) {
  std::ofstream out = open_out(path);
  out << report_to_json(report).dump(2) << '\n';
}

inline void write_report_csv(const std::string& path,
                             const EvaluationReport& report) {
  std::ofstream out = open_out(path);
  out << "trial,nmse,failed,error\n";
  for (std::size_t i = 0; i < report.per_trial.size(); ++i) {
    const TrialResult& r = report.per_trial[i];
    out << i << ',' << (r.failed ? "" : format_double(r.nmse)) << ','
        << (r.failed ? 1 : 0) << ',' << (r.failed ? r.error : std::string())
        << '\n';
  }
}

}  // namespace io
}  // namespace graphkernel
