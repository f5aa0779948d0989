#include "coxht/numcore/special.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

namespace coxht {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

namespace {
void check_chi_square_args(double x, int dof) {
  if (dof < 1) throw std::invalid_argument("chi-square: degrees of freedom must be >= 1");
  if (!(x >= 0.0)) throw std::invalid_argument("chi-square: argument must be non-negative");
}
}  // namespace

double chi_square_cdf(double x, int dof) {
  check_chi_square_args(x, dof);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

double chi_square_sf(double x, int dof) {
  check_chi_square_args(x, dof);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

}  // namespace coxht
