#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "coxht/survival_model.hpp"

namespace coxht {

/// s0 = E[S(C | kappa Z)], s1 = E[S(C | kappa Z) Z] with S(x | kappa z) =
/// exp(-lambda x e^{kappa z}), Z ~ N(0, 1), C ~ U[censor_lo, censor_hi].
struct StateConstants {
  double s0 = 0.0;
  double s1 = 0.0;
  double kappa = 0.0;
  double delta = 0.0;
};

struct Quadrature {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Gauss-Hermite rule for the standard normal density (weights sum to 1),
/// nodes symmetric about 0 exactly. Golub-Welsch.
Quadrature gauss_hermite_normal(int count);
/// Gauss-Legendre rule on [lo, hi] for the uniform density (weights sum to 1).
Quadrature gauss_legendre_uniform(int count, double lo, double hi);

/// Tensor-product quadrature with `nodes` points per axis. Throws
/// NumericalError if doubling the node count moves either constant by more
/// than 1e-8. Requires nodes >= 16.
StateConstants censoring_expectations(double kappa, double lambda, double censor_lo, double censor_hi,
                                      double delta, int nodes = 64);

/// G_n(u) = sum_i Delta_i log((1/n) sum_{j in R_i} e^{u_j}) on a sorted cohort,
/// with O(n) gradients and Hessian-vector products.
class GnFunction {
 public:
  explicit GnFunction(const SortedCohort& sorted);

  Eigen::Index n() const { return n_; }
  double value(const Eigen::VectorXd& u) const;

  /// State of the last evaluation point, reused by hessian_times.
  struct Point {
    Eigen::VectorXd log_s;   // per block: log sum_{k <= block end} e^{u_k}
    Eigen::VectorXd ratio;   // e^{u_j - log_s(block of j)}
    Eigen::VectorXd weight;  // per block: sum over later events of e^{log_s(b) - log_s(i)}
    Eigen::VectorXd weight2;  // same with squared factors
  };

  double value_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad, Point& point) const;
  Eigen::VectorXd hessian_times(const Point& point, const Eigen::VectorXd& v) const;
  Eigen::VectorXd hessian_diagonal(const Point& point) const;

 private:
  Eigen::Index n_ = 0;
  std::vector<Eigen::Index> block_end_;
  std::vector<Eigen::Index> block_of_;
  std::vector<int> events_in_block_;
};

/// One realization of the auxiliary problem: the reduced cohort (sorted, with
/// q and Delta) and an independent standard normal vector h.
struct EnvelopeContext {
  ReducedCohort reduced;
  Eigen::VectorXd h;
  GnFunction gn;

  EnvelopeContext(ReducedCohort reduced, Eigen::VectorXd h);
  Eigen::Index n() const { return reduced.n(); }
};

/// Context of size n_rep: reduced cohort from RngStream(seed, 2 k) and h from
/// RngStream(seed, 2 k + 1), k = index.
EnvelopeContext make_envelope_context(const ModelConfig& config, Eigen::Index n_rep, std::uint64_t seed,
                                      std::uint64_t index = 0);

/// The sample versions of the constants: s0 = 1 - mean(Delta), s1 = -mean(Delta q).
StateConstants empirical_constants(const EnvelopeContext& ctx, double kappa, double delta);

struct ProxResult {
  Eigen::VectorXd u;
  double grad_norm = 0.0;  // ||grad Psi(u)||_2
  int iterations = 0;
  bool converged = false;
};

struct ProxOptions {
  double tol = 1e-8;  // on ||grad Psi|| / max(1, ||xi||)
  int max_iter = 2000;
};

/// argmin_u G_n(u) + (c/2) ||u - xi||^2 by Newton-CG with Armijo backtracking.
/// `start`, if given, is the initial iterate. Hitting the iteration cap returns
/// the best iterate with converged = false.
ProxResult prox_Gn(const EnvelopeContext& ctx, const Eigen::VectorXd& xi, double c, const ProxOptions& options = {},
                   const Eigen::VectorXd* start = nullptr);

/// M_{G_n}(xi; inv_c) = min_u G_n(u) + ||u - xi||^2 / (2 inv_c).
double moreau_envelope(const EnvelopeContext& ctx, const Eigen::VectorXd& xi, double inv_c,
                       const ProxOptions& options = {});

/// Carries the previous prox solution between nearby saddle evaluations.
struct WarmStart {
  Eigen::VectorXd gradient;  // grad G_n at the last prox point, empty if none
};

/// F(a, b, r) = (1/n) M_{G_n}(xi; b sqrt(delta) / r) - (b sqrt(delta) / (2 r))(1 - s0)
///              + kappa a s1 - r sqrt(delta) b / 2,
/// xi = kappa a q + b h + (sqrt(delta) b / r) Delta.
double saddle_objective(const EnvelopeContext& ctx, const StateConstants& consts, double a, double b, double r,
                        WarmStart* warm = nullptr);

struct SaddleGradient {
  double value = 0.0;
  std::array<double, 3> grad{};  // dF/da, dF/db, dF/dr
};

/// F and its exact partial derivatives from a single prox solve
/// (grad_xi M = c (xi - u*), dM/d inv_c = -||grad_xi M||^2 / 2).
SaddleGradient saddle_gradient(const EnvelopeContext& ctx, const StateConstants& consts, double a, double b,
                               double r, WarmStart* warm = nullptr);

struct StateSolveOptions {
  double tol = 1e-5;           // outer simplex diameter
  double residual_tol = 1e-3;  // finite-difference stationarity
  double log_r_lo = -7.0;
  double log_r_hi = 5.0;
  int scan_points = 16;
  int starts = 3;
};

struct StateSolution {
  double a_star = 0.0;
  double b_star = 0.0;
  double r_star = 0.0;
  double v_star = 0.0;  // 1 / (b* sqrt(delta))
  double saddle_value = 0.0;
  std::array<double, 3> residuals{};  // dF/da, dF/db, dF/dr
  int evaluations = 0;
  bool converged = false;
};

/// min over (a, b > 0) of max over r > 0 of F: golden section on log r after a
/// coarse scan, Nelder-Mead on (a, log b), restarted from perturbed initial
/// points when the first attempt does not meet the residual tolerance.
StateSolution solve_state_equations(const EnvelopeContext& ctx, const StateConstants& consts,
                                    std::array<double, 3> init = {1.0, 1.0, 1.0},
                                    const StateSolveOptions& options = {});

struct RefineOptions {
  double grad_tol = 1e-7;  // max |dF/d(a, b, r)|
  int max_iter = 30;
  double fd_step = 1e-4;   // Jacobian step in (a, log b, log r)
  double residual_tol = 1e-3;
};

/// Newton's method on grad F = 0 in (a, log b, log r), started from `init`
/// (typically a nested solve on a smaller context). The Jacobian is a central
/// difference of the exact gradient; steps are backtracked on ||grad F||.
StateSolution refine_state_solution(const EnvelopeContext& ctx, const StateConstants& consts,
                                    const StateSolution& init, const RefineOptions& options = {});

/// Positive root u of b3 (log u - b1) = -b2 u for b3 > 0, b2 >= 0.
double k_solve(double b1, double b2, double b3);

struct TheoreticalErrors {
  double rel_err_sq = 0.0;   // (a* - 1)^2 + b*^2 / kappa^2
  double proj_err_sq = 0.0;  // b*^2
};

TheoreticalErrors theoretical_errors(const StateSolution& solution, double kappa);

}  // namespace coxht
