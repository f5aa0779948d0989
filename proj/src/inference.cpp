#include "coxht/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coxht/numcore/special.hpp"

namespace coxht {

namespace {

double two_sided(double z) { return std::min(1.0, 2.0 * normal_sf(std::abs(z))); }

}  // namespace

Eigen::VectorXd corrected_pvalues(const Eigen::VectorXd& beta, double b_star) {
  if (!(b_star > 0.0)) throw std::invalid_argument("corrected_pvalues: b_star must be positive");
  Eigen::VectorXd p(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) p[j] = two_sided(beta[j] / b_star);
  return p;
}

TestReport wald_chi2(const Eigen::VectorXd& beta, double b_star) {
  if (beta.size() == 0) throw std::invalid_argument("wald_chi2: empty coordinate set");
  if (!(b_star > 0.0)) throw std::invalid_argument("wald_chi2: b_star must be positive");
  TestReport r;
  r.kind = TestKind::corrected_chi2;
  r.dof = static_cast<int>(beta.size());
  r.statistic = (beta / b_star).squaredNorm();
  r.p_value = chi_square_sf(r.statistic, *r.dof);
  return r;
}

Eigen::VectorXd classical_pvalues(const Eigen::VectorXd& beta, const Eigen::VectorXd& std_err) {
  if (beta.size() != std_err.size()) throw std::invalid_argument("classical_pvalues: size mismatch");
  Eigen::VectorXd p(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (!(std_err[j] > 0.0)) throw std::invalid_argument("classical_pvalues: standard errors must be positive");
    p[j] = two_sided(beta[j] / std_err[j]);
  }
  return p;
}

AbEstimate empirical_ab(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta_true) {
  if (beta_hat.size() != beta_true.size()) throw std::invalid_argument("empirical_ab: size mismatch");
  const double nn = beta_true.squaredNorm();
  if (!(nn > 0.0)) throw std::invalid_argument("empirical_ab: beta_true is zero");
  AbEstimate e;
  e.a_hat = beta_hat.dot(beta_true) / nn;
  e.b_hat = (beta_hat - e.a_hat * beta_true).norm() / std::sqrt(static_cast<double>(beta_true.size()));
  return e;
}

double ks_uniform_stat(std::vector<double> u) {
  if (u.empty()) throw std::invalid_argument("ks_uniform_stat: empty sample");
  for (double v : u)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("ks_uniform_stat: values must lie in [0, 1]");
  std::sort(u.begin(), u.end());
  const double m = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double k = static_cast<double>(i);
    d = std::max({d, (k + 1.0) / m - u[i], u[i] - k / m});
  }
  return d;
}

}  // namespace coxht
