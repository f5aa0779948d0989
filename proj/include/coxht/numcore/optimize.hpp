#pragma once

#include <functional>

#include <Eigen/Core>

namespace coxht {

using ScalarFn = std::function<double(double)>;

/// Root of a continuous f on [lo, hi] with f(lo) * f(hi) <= 0.
/// Returns once |f(root)| <= tol or the bracket is narrower than tol.
/// Throws BracketError when the endpoints share a sign.
double solve_scalar_root(const ScalarFn& f, double lo, double hi, double tol);

enum class Sense { minimize, maximize };

struct ScalarExtremum {
  double x;
  double value;
};

/// Golden-section search on [lo, hi]. For a function that is not unimodal
/// the result is a local extremum.
ScalarExtremum golden_section_extremum(const ScalarFn& f, double lo, double hi, double tol,
                                       Sense sense);

struct NelderMeadOptions {
  double tol = 1e-8;        // simplex diameter (max-norm) at convergence
  int max_iter = 5000;
  double initial_step = 0.1;  // relative to max(1, |x0_i|)
  int restarts = 1;         // fresh simplexes around the incumbent after convergence
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free minimization. Throws NumericalError if f is non-finite at
/// any probe point; the message carries the point.
NelderMeadResult nelder_mead_min(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x0, const NelderMeadOptions& options = {});

}  // namespace coxht
