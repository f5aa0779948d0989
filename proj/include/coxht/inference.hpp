#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

namespace coxht {

enum class TestKind { corrected_z, corrected_chi2, classical_z, classical_lrt };

struct TestReport {
  double statistic = 0.0;
  double p_value = 1.0;
  TestKind kind = TestKind::corrected_z;
  std::optional<int> dof;
};

/// Two-sided p-values 2 Phi(-|beta_j / b_star|).
Eigen::VectorXd corrected_pvalues(const Eigen::VectorXd& beta_hat_coords, double b_star);

/// Sum of (beta_j / b_star)^2 against chi-square with |S| degrees of freedom.
TestReport wald_chi2(const Eigen::VectorXd& beta_hat_null, double b_star);

/// Two-sided p-values 2 Phi(-|beta_j / std_j|) with model-based standard errors.
Eigen::VectorXd classical_pvalues(const Eigen::VectorXd& beta_hat_coords, const Eigen::VectorXd& std_err);

struct AbEstimate {
  double a_hat = 0.0;
  double b_hat = 0.0;
};

/// a = <beta_hat, beta*> / ||beta*||^2, b = ||beta_hat - a beta*|| / sqrt(p).
AbEstimate empirical_ab(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta_true);

/// Kolmogorov-Smirnov distance between the empirical CDF of `pvals` and U[0, 1].
double ks_uniform_stat(std::vector<double> pvals);

}  // namespace coxht
