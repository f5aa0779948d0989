#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "coxht/numcore/dykstra.hpp"
#include "coxht/survival_model.hpp"

namespace coxht {

/// The order cone M over a sorted cohort: m_i >= m_{k_i} for every i whose
/// next event k_i exists, and m_i = m_j inside each group of tied events.
struct ConeM {
  HalfspaceSet halfspaces{0};
  // Chain view used by the exact projection: events pooled by ties in chain
  // order, and for each coordinate the chain node it must dominate
  // (-1 when unconstrained).
  std::vector<std::vector<Eigen::Index>> nodes;
  std::vector<Eigen::Index> dominates;
  std::vector<Eigen::Index> node_of;  // node of an event, -1 otherwise

  Eigen::Index dimension() const { return halfspaces.dimension(); }
};

ConeM build_cone(const SortedCohort& sorted);
inline ConeM build_cone(const ReducedCohort& reduced) { return build_cone(reduced.sorted); }

/// Exact Euclidean projection onto M. The event values form a nonincreasing
/// chain and each other coordinate only needs to stay above its node, so
/// the problem is an isotonic regression with piecewise quadratic losses,
/// solved by pool-adjacent-violators.
Eigen::VectorXd project_cone(const ConeM& cone, const Eigen::VectorXd& z);

enum class ProjectionMethod { exact, dykstra };

struct QpResult {
  double value = 0.0;  // (1/n) min_{t, m in M} ||h - t q - m||^2
  double t = 0.0;
  Eigen::VectorXd m;
  int evaluations = 0;  // projections performed
};

/// Minimizes over t the convex function dist^2(h - t q, M) by a root search
/// on its derivative -2 <q, residual(t)>.
QpResult qp_value(const ReducedCohort& reduced, const Eigen::VectorXd& h, double tol = 1e-12,
                  ProjectionMethod method = ProjectionMethod::exact);
QpResult qp_value(const ConeM& cone, const Eigen::VectorXd& q, const Eigen::VectorXd& h, double tol = 1e-12,
                  ProjectionMethod method = ProjectionMethod::exact);

struct HEstimate {
  double mean = 0.0;
  double stderr = 0.0;
  int reps = 0;
};

/// Monte Carlo estimate of the transition value h(lambda0, kappa, P_C).
/// Replication r draws a reduced cohort of size n and then h ~ N(0, I_n) from
/// RngStream(seed, r); results are summed in replication order.
HEstimate estimate_h(const ModelConfig& config, Eigen::Index n, int reps, std::uint64_t seed,
                     int workers = 1);

struct BoundaryPoint {
  double kappa = 0.0;
  double delta_hat = 0.0;
  double stderr = 0.0;
  Eigen::Index n = 0;
  int reps = 0;
};

/// estimate_h at every kappa of an increasing grid. The same seed is used at
/// every grid point (common random numbers), so the curve is smooth in kappa.
std::vector<BoundaryPoint> boundary_curve(const ModelConfig& config, const std::vector<double>& kappa_grid,
                                          Eigen::Index n, int reps, std::uint64_t seed, int workers = 1);

}  // namespace coxht
