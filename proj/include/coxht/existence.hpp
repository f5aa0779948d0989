#pragma once

#include <vector>

#include <Eigen/Core>

#include "coxht/survival_model.hpp"

namespace coxht {

enum class RowKind { chain, tie };

/// Difference rows (x_a - x_b)^T over sorted covariates; a direction b with
/// every row^T b >= 0 and one strictly positive makes the partial likelihood
/// increase without bound.
struct ConstraintMatrix {
  Eigen::MatrixXd rows;  // one constraint per row
  std::vector<RowKind> provenance;

  Eigen::Index size() const { return rows.rows(); }
};

/// Reduced constraint set: for each event i_l, the rows x_{i_l} - x_j for
/// j = i_{l-1}, ..., i_l - 1 (i_0 = 0), then for every group of tied events
/// g_1 < ... < g_k the closing rows x_{g_t} - x_{g_{t+1}}. Throws
/// std::invalid_argument("no events") if the cohort has no events.
ConstraintMatrix build_reduced_constraints(const SortedCohort& sorted, const Eigen::MatrixXd& x);

/// Every pair constraint x_i - x_j, i an event and j != i in its risk set.
ConstraintMatrix build_full_constraints(const SortedCohort& sorted, const Eigen::MatrixXd& x);

struct LpSolution {
  double value = 0.0;
  Eigen::VectorXd b;
  int pivots = 0;
};

/// max c^T b subject to R b >= 0 and -1 <= b <= 1. Solved through the dual
/// min_{y >= 0} ||c + R^T y||_1 with a dense primal simplex (Dantzig pricing,
/// Bland's rule after a run of degenerate pivots); `value` is the dual
/// objective and `b` comes from the final simplex multipliers. Throws LpError
/// if the iteration guard trips or the two values disagree.
LpSolution solve_cone_box_lp(const Eigen::MatrixXd& rows, const Eigen::VectorXd& objective);

/// max sum_r r^T b over the same region; 0 for an empty matrix.
double lp_max(const ConstraintMatrix& d);

/// As lp_max with objective sum_r w_r r^T b.
double lp_max_weighted(const ConstraintMatrix& d, const Eigen::VectorXd& weights);

struct ExistenceReport {
  bool exists = false;
  double lp_value = 0.0;
  Eigen::Index rows = 0;
  Eigen::Index rank = 0;  // rank probe of the constraint rows; not part of the verdict
  bool full_rank = false;
};

ExistenceReport check_existence(const SortedCohort& sorted, const Eigen::MatrixXd& x, double tol = 1e-9);

/// True iff lp_max of the reduced constraints is at most tol.
bool mple_exists(const SortedCohort& sorted, const Eigen::MatrixXd& x, double tol = 1e-9);

/// Same verdict computed from the full constraint set. Meant for n <= 12.
bool brute_force_exists(const SortedCohort& sorted, const Eigen::MatrixXd& x, double tol = 1e-9);

}  // namespace coxht
