#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "coxht/numcore/rng.hpp"

namespace coxht {

enum class BetaScheme { phase, half_sparse };

BetaScheme parse_beta_scheme(const std::string& name);
std::string to_string(BetaScheme scheme);

/// Simulation settings for the Gaussian-design Cox model with constant
/// baseline hazard and uniform censoring.
struct ModelConfig {
  int n = 200;
  int p = 20;
  double kappa = 1.0;          // signal strength, ||beta*|| / sqrt(p)
  double baseline_rate = 1.0;  // lambda0(t) = baseline_rate
  double censor_lo = 1.0;
  double censor_hi = 2.0;
  BetaScheme beta_scheme = BetaScheme::phase;
  bool renormalize_beta = true;
  bool fix_beta = false;  // draw beta* once per experiment instead of per replication

  double delta() const { return static_cast<double>(p) / n; }
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

/// Simulated (or ingested) cohort in input order. T and C are empty for
/// externally supplied data.
struct Cohort {
  Eigen::MatrixXd x;  // n x p
  Eigen::VectorXd survival;
  Eigen::VectorXd censoring;
  Eigen::VectorXd y;
  Eigen::VectorXi delta;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return x.cols(); }
};

/// Cohort sorted by decreasing observed time; within a tie censored
/// observations come first. All indices are 0-based positions in sorted order.
struct SortedCohort {
  std::vector<Eigen::Index> order;  // sorted position -> input row
  Eigen::VectorXd y;                // nonincreasing
  Eigen::VectorXi delta;
  std::vector<Eigen::Index> rho;    // last position j with y_j >= y_i
  std::vector<Eigen::Index> events;  // positions with delta = 1, increasing
  std::vector<Eigen::Index> next_event;  // smallest event position > i, or -1
  std::vector<std::vector<Eigen::Index>> tie_groups;  // >= 2 tied events each

  Eigen::Index n() const { return y.size(); }
  Eigen::Index event_count() const { return static_cast<Eigen::Index>(events.size()); }

  /// Rows of `x` (input order) permuted into sorted order.
  Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd permute(const Eigen::VectorXd& v) const;
};

/// One-dimensional reduction: scalar covariate q with hazard
/// lambda0 * exp(kappa * q). Everything is stored in sorted order.
struct ReducedCohort {
  SortedCohort sorted;
  Eigen::VectorXd q;
  double kappa = 0.0;

  Eigen::Index n() const { return sorted.n(); }
};

/// Signal vector beta*. Phase scheme: every coordinate c_kappa * U[kappa-1,
/// kappa+1]; half-sparse: the first ceil(p/2) coordinates with the doubled
/// scaling and the rest zero. With renormalize_beta the result is rescaled
/// so that ||beta*|| = kappa * sqrt(p) exactly.
Eigen::VectorXd gen_beta(const ModelConfig& config, RngStream& stream);

/// Inverse-CDF draw of an exponential survival time with rate
/// baseline_rate * exp(eta): -log(u) / (baseline_rate * exp(eta)).
double survival_time(double u, double eta, double baseline_rate);

Cohort generate_cohort(const ModelConfig& config, const Eigen::VectorXd& beta, RngStream& stream);

/// Builds a cohort from observed times, indicators and covariates.
Cohort make_cohort(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::VectorXi delta);

SortedCohort sort_cohort(const Eigen::VectorXd& y, const Eigen::VectorXi& delta);
inline SortedCohort sort_cohort(const Cohort& cohort) { return sort_cohort(cohort.y, cohort.delta); }

ReducedCohort reduce_to_1d(const ModelConfig& config, Eigen::Index n, RngStream& stream);

/// Indices of null coordinates (beta_j == 0), increasing.
std::vector<Eigen::Index> null_coordinates(const Eigen::VectorXd& beta);

}  // namespace coxht
