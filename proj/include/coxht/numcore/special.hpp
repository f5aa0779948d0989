#pragma once

namespace coxht {

/// Standard normal CDF.
double normal_cdf(double x);

/// Upper tail 1 - normal_cdf(x), accurate for large x.
double normal_sf(double x);

/// CDF of the chi-square distribution with `dof` degrees of freedom,
/// P(dof/2, x/2) in terms of the regularized lower incomplete gamma.
/// Throws std::invalid_argument for dof == 0 or x < 0.
double chi_square_cdf(double x, int dof);

/// Upper tail 1 - chi_square_cdf(x, dof), computed directly so that small
/// p-values keep their relative accuracy.
double chi_square_sf(double x, int dof);

}  // namespace coxht
