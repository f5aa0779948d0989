#pragma once

#include <Eigen/Core>

#include "coxht/survival_model.hpp"

namespace coxht {

// All functions here take covariates already permuted into sorted order
// (SortedCohort::permute_rows) and use the Breslow risk sets
// {j : Y_j >= Y_i}, ties included.

/// L(beta) = (1/n) sum_i Delta_i { eta_i - log((1/n) sum_{j in R_i} exp(eta_j)) }.
double partial_loglik(const SortedCohort& sorted, const Eigen::MatrixXd& x,
                      const Eigen::VectorXd& beta);

/// Same as partial_loglik with the linear predictor supplied directly.
double partial_loglik_eta(const SortedCohort& sorted, const Eigen::VectorXd& eta);

struct ScoreInformation {
  double loglik = 0.0;
  Eigen::VectorXd gradient;  // grad L
  Eigen::MatrixXd info;      // -Hessian of L, symmetric PSD
};

ScoreInformation score_and_information(const SortedCohort& sorted, const Eigen::MatrixXd& x,
                                       const Eigen::VectorXd& beta);

struct FitOptions {
  double tol = 1e-9;              // on ||grad L||_inf
  double step_tol = 1e-6;         // Newton step size required alongside tol
  int max_iter = 100;
  double divergence_factor = 1e3;  // diverged once ||beta|| >= factor * sqrt(p)
};

struct FitResult {
  Eigen::VectorXd beta_hat;
  double loglik = 0.0;
  double grad_norm = 0.0;  // ||grad L||_inf at exit
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
};

/// Maximum partial likelihood by Newton's method with step halving (and step
/// doubling while the likelihood keeps rising, so that a missing maximizer
/// shows up as norm blow-up rather than a vanishing gradient). Divergence, by
/// norm or by collapse of the information relative to the start, is
/// a flagged result. Throws SingularInformationError when the information at
/// the starting point is singular.
FitResult fit_mple(const SortedCohort& sorted, const Eigen::MatrixXd& x,
                   const Eigen::VectorXd& init = {}, const FitOptions& options = {});

/// sqrt(diag((n * I(beta))^{-1})) with I = -Hessian of L. Throws
/// SingularInformationError if I(beta) is singular.
Eigen::VectorXd fisher_std(const SortedCohort& sorted, const Eigen::MatrixXd& x,
                           const Eigen::VectorXd& beta);

struct LrtResult {
  double statistic = 0.0;  // 2n (L(beta_hat) - L(beta_hat restricted)), NaN if a fit diverged
  double p_value = 0.0;    // chi-square(1) upper tail
  bool diverged = false;
};

/// Likelihood ratio statistic for beta_j = 0. `full` may pass an already
/// computed unrestricted fit.
LrtResult lrt_stat(const SortedCohort& sorted, const Eigen::MatrixXd& x, Eigen::Index j,
                   const FitOptions& options = {}, const FitResult* full = nullptr);

}  // namespace coxht
