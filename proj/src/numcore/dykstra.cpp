#include "coxht/numcore/dykstra.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coxht {

HalfspaceSet::HalfspaceSet(Eigen::Index dimension) : dim_(dimension) {
  if (dimension < 0) throw std::invalid_argument("HalfspaceSet: dimension must be non-negative");
}

void HalfspaceSet::add_row(const Eigen::VectorXd& a) {
  if (a.size() != dim_) throw std::invalid_argument("HalfspaceSet: row dimension mismatch");
  Row row;
  for (Eigen::Index i = 0; i < dim_; ++i) {
    if (a[i] != 0.0) {
      row.index.push_back(i);
      row.value.push_back(a[i]);
    }
  }
  rows_.push_back(std::move(row));
}

void HalfspaceSet::add_difference(Eigen::Index i, Eigen::Index j) {
  if (i < 0 || j < 0 || i >= dim_ || j >= dim_ || i == j)
    throw std::out_of_range("HalfspaceSet: difference indices out of range");
  rows_.push_back(Row{{i, j}, {1.0, -1.0}});
}

void HalfspaceSet::add_equality(Eigen::Index i, Eigen::Index j) {
  if (i < 0 || j < 0 || i >= dim_ || j >= dim_ || i == j)
    throw std::out_of_range("HalfspaceSet: equality indices out of range");
  eqs_.emplace_back(i, j);
}

Eigen::MatrixXd HalfspaceSet::dense_constraints() const {
  const auto total = static_cast<Eigen::Index>(rows_.size() + 2 * eqs_.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(total, dim_);
  Eigen::Index r = 0;
  for (const auto& row : rows_) {
    for (std::size_t k = 0; k < row.index.size(); ++k) a(r, row.index[k]) = row.value[k];
    ++r;
  }
  for (const auto& [i, j] : eqs_) {
    a(r, i) = 1.0;
    a(r, j) = -1.0;
    a(r + 1, i) = -1.0;
    a(r + 1, j) = 1.0;
    r += 2;
  }
  return a;
}

double HalfspaceSet::max_violation(const Eigen::VectorXd& m) const {
  double worst = 0.0;
  for (const auto& row : rows_) {
    double s = 0.0;
    for (std::size_t k = 0; k < row.index.size(); ++k) s += row.value[k] * m[row.index[k]];
    worst = std::max(worst, -s);
  }
  for (const auto& [i, j] : eqs_) worst = std::max(worst, std::abs(m[i] - m[j]));
  return worst;
}

namespace {

struct WorkRow {
  const Eigen::Index* index;
  const double* value;
  std::size_t nnz;
  double norm_sq;
};

}  // namespace

DykstraResult dykstra_project(const Eigen::VectorXd& z, const HalfspaceSet& set,
                              const DykstraOptions& options) {
  if (z.size() != set.dimension()) throw std::invalid_argument("dykstra_project: dimension mismatch");

  // equalities become two opposing halfspaces
  std::vector<HalfspaceSet::Row> eq_rows;
  eq_rows.reserve(2 * set.equalities().size());
  for (const auto& [i, j] : set.equalities()) {
    eq_rows.push_back({{i, j}, {1.0, -1.0}});
    eq_rows.push_back({{i, j}, {-1.0, 1.0}});
  }
  std::vector<WorkRow> rows;
  rows.reserve(set.rows().size() + eq_rows.size());
  const auto push = [&rows](const HalfspaceSet::Row& r) {
    double nsq = 0.0;
    for (double v : r.value) nsq += v * v;
    if (nsq > 0.0) rows.push_back({r.index.data(), r.value.data(), r.index.size(), nsq});
  };
  for (const auto& r : set.rows()) push(r);
  for (const auto& r : eq_rows) push(r);

  DykstraResult result;
  Eigen::VectorXd x = z;
  std::vector<double> theta(rows.size(), 0.0);  // increments y_k = theta_k * a_k

  for (result.sweeps = 0; result.sweeps < options.max_iter;) {
    ++result.sweeps;
    double change = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const WorkRow& row = rows[k];
      double s = 0.0;
      for (std::size_t t = 0; t < row.nnz; ++t) s += row.value[t] * x[row.index[t]];
      const double old = theta[k];
      s += old * row.norm_sq;  // a^T (x + y_k)
      const double updated = s < 0.0 ? s / row.norm_sq : 0.0;
      const double delta = old - updated;
      if (delta != 0.0) {
        for (std::size_t t = 0; t < row.nnz; ++t) x[row.index[t]] += delta * row.value[t];
      }
      theta[k] = updated;
      change += delta * delta * row.norm_sq;
    }
    if (change <= options.tol * options.tol && set.max_violation(x) <= options.tol) {
      result.converged = true;
      break;
    }
  }
  result.projection = std::move(x);
  return result;
}

}  // namespace coxht
