#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

namespace coxht {

/// Homogeneous polyhedral cone {m : a_k^T m >= 0 for all k, m_i = m_j for all
/// equality pairs}. Rows are stored sparsely; cone rows produced by this
/// library have two nonzeros.
class HalfspaceSet {
public:
  struct Row {
    std::vector<Eigen::Index> index;
    std::vector<double> value;
  };

  explicit HalfspaceSet(Eigen::Index dimension);

  Eigen::Index dimension() const { return dim_; }

  /// Adds {m : a^T m >= 0}; a must have length dimension().
  void add_row(const Eigen::VectorXd& a);
  /// Adds {m : m_i - m_j >= 0}.
  void add_difference(Eigen::Index i, Eigen::Index j);
  /// Adds m_i = m_j (0-based indices).
  void add_equality(Eigen::Index i, Eigen::Index j);

  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<std::pair<Eigen::Index, Eigen::Index>>& equalities() const { return eqs_; }

  /// Dense coefficient matrix of every constraint, equalities expanded into
  /// two opposing rows.
  Eigen::MatrixXd dense_constraints() const;

  /// Largest violation max(0, -a_k^T m) over rows and |m_i - m_j| over pairs.
  double max_violation(const Eigen::VectorXd& m) const;

private:
  Eigen::Index dim_;
  std::vector<Row> rows_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> eqs_;
};

struct DykstraOptions {
  double tol = 1e-8;
  int max_iter = 50000;
};

struct DykstraResult {
  Eigen::VectorXd projection;
  int sweeps = 0;
  bool converged = false;
};

/// Euclidean projection of z onto the cone via Dykstra's alternating
/// projections. Equality pairs act as two opposing halfspaces. When the sweep
/// budget runs out the last iterate is returned with converged = false.
DykstraResult dykstra_project(const Eigen::VectorXd& z, const HalfspaceSet& set,
                              const DykstraOptions& options = {});

}  // namespace coxht
