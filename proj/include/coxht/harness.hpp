#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coxht/boundary.hpp"
#include "coxht/state_eq.hpp"
#include "coxht/survival_model.hpp"

namespace coxht {

enum class ExperimentKind { phase_diagram, consistency, null_dist, classical_failure };

ExperimentKind parse_experiment_kind(const std::string& name);
std::string to_string(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::phase_diagram;
  ModelConfig model;
  std::vector<double> delta_grid;  // "grids": {"delta": [...]}
  std::vector<double> kappa_grid;  // "grids": {"kappa": [...]}
  int reps = 100;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int workers = 0;  // 0: available parallelism

  int qp_reps = 500;  // boundary curve replications (phase_diagram)
  int qp_n = 1000;    // boundary curve sample size

  int n_rep = 200000;                    // state-equation context size (Newton refinement)
  int coarse_n_rep = 2000;               // context size of the nested starting solve
  std::string constants = "population";  // or "empirical"

  int null_coords = 50;  // designated null coordinates (null_dist)
  std::vector<int> chi2_groups{2, 5};
  int chi2_partitions = 2;  // random partitions of the null coordinates per replication

  int lrt_coords = 5;              // null coordinates tested by LRT per replication (classical_failure)
  std::string fisher_at = "truth";  // or "estimate"

  bool gnuplot = false;

  /// Throws ConfigError.
  void validate() const;
  int effective_workers() const;
};

/// Parses the JSON config. Unknown keys and ill-typed values throw ConfigError.
ExperimentConfig parse_experiment_config(const std::string& json_text);
/// Canonical JSON echo of every field (stable key order).
std::string config_to_json(const ExperimentConfig& config);

/// p = round(delta * n), at least 1.
int columns_for(double delta, int n);

/// A file produced by an experiment, relative to out_dir.
struct Artifact {
  std::string name;
  std::string content;
};

struct PhaseCell {
  double delta = 0.0;
  double kappa = 0.0;
  int p = 0;
  double exist_frac = 0.0;
  int reps = 0;
  int failed = 0;  // LP failures, excluded from exist_frac
};

struct PhaseDiagramResult {
  std::vector<PhaseCell> cells;
  std::vector<BoundaryPoint> boundary;
  std::vector<Artifact> artifacts;
};

struct ConsistencyCell {
  double kappa = 0.0;
  double delta = 0.0;
  int p = 0;
  double a_hat_mean = 0.0;
  double a_hat_se = 0.0;
  double b_hat_mean = 0.0;
  double b_hat_se = 0.0;
  double rel_err_mean = 0.0;  // mean ||beta_hat - beta*||^2 / ||beta*||^2
  StateSolution solution;
  int fits = 0;
  int failed = 0;
};

struct ConsistencyResult {
  std::vector<ConsistencyCell> cells;
  std::vector<Artifact> artifacts;
};

struct PvalueFamily {
  std::string name;  // corrected_z, classical_z, chi2_l<l>
  int count = 0;
  double ks_d = 0.0;
};

struct NullCell {
  double delta = 0.0;
  double kappa = 0.0;
  int p = 0;
  double b_star = 0.0;
  bool solver_converged = false;
  int failed = 0;
  std::vector<PvalueFamily> families;
};

struct NullDistributionResult {
  std::vector<NullCell> cells;
  std::vector<Artifact> artifacts;
};

struct ClassicalCell {
  double delta = 0.0;
  double kappa = 0.0;
  int p = 0;
  double ratio_mean = 0.0;  // empirical std / mean Fisher std, averaged over null coordinates
  double lrt_ks_d = 0.0;
  int lrt_count = 0;
  double slope = 0.0;  // least-squares slope of beta_hat on beta*, pooled
  double a_star = 0.0;
  double b_star = 0.0;
  bool solver_converged = false;
  int failed = 0;
};

struct ClassicalFailureResult {
  std::vector<ClassicalCell> cells;
  std::vector<Artifact> artifacts;
};

PhaseDiagramResult run_phase_diagram(const ExperimentConfig& config);
ConsistencyResult run_consistency(const ExperimentConfig& config);
NullDistributionResult run_null_distribution(const ExperimentConfig& config);
ClassicalFailureResult run_classical_failure(const ExperimentConfig& config);

/// Dispatches on config.experiment.
std::vector<Artifact> run_experiment(const ExperimentConfig& config);

/// (a*, b*) for one cell, with the constants chosen by config.constants: a
/// nested solve on a coarse_n_rep context, refined by Newton on an n_rep context.
StateSolution solve_cell(const ExperimentConfig& config, double delta, double kappa, std::uint64_t cell);

/// Writes every artifact under out_dir plus a sidecar <name>.json for each CSV
/// (config echo, input hash, content hash, wall time). Throws std::runtime_error on IO failure.
void write_artifacts(const ExperimentConfig& config, const std::vector<Artifact>& artifacts, double wall_seconds);

/// Git blob hash (SHA-1 of "blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(const std::string& content);

}  // namespace coxht
