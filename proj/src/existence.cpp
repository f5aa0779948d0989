#include "coxht/existence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/LU>
#include <Eigen/QR>

#include "coxht/errors.hpp"

namespace coxht {

namespace {

void check_rows(const SortedCohort& s, const Eigen::MatrixXd& x) {
  if (x.rows() != s.n()) throw std::invalid_argument("existence: covariate rows do not match cohort");
  if (s.event_count() == 0) throw std::invalid_argument("no events");
}

class RowBuilder {
 public:
  explicit RowBuilder(const Eigen::MatrixXd& x) : x_(x) {}

  void add(Eigen::Index a, Eigen::Index b, RowKind kind) {
    pairs_.emplace_back(a, b);
    kinds_.push_back(kind);
  }

  ConstraintMatrix finish() const {
    ConstraintMatrix d;
    d.rows.resize(static_cast<Eigen::Index>(pairs_.size()), x_.cols());
    for (std::size_t k = 0; k < pairs_.size(); ++k)
      d.rows.row(static_cast<Eigen::Index>(k)) = x_.row(pairs_[k].first) - x_.row(pairs_[k].second);
    d.provenance = kinds_;
    return d;
  }

 private:
  const Eigen::MatrixXd& x_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs_;
  std::vector<RowKind> kinds_;
};

}  // namespace

ConstraintMatrix build_reduced_constraints(const SortedCohort& s, const Eigen::MatrixXd& x) {
  check_rows(s, x);
  RowBuilder out(x);
  Eigen::Index prev = 0;
  for (Eigen::Index e : s.events) {
    for (Eigen::Index j = prev; j < e; ++j) out.add(e, j, RowKind::chain);
    prev = e;
  }
  for (const auto& group : s.tie_groups)
    for (std::size_t t = 0; t + 1 < group.size(); ++t) out.add(group[t], group[t + 1], RowKind::tie);
  return out.finish();
}

ConstraintMatrix build_full_constraints(const SortedCohort& s, const Eigen::MatrixXd& x) {
  check_rows(s, x);
  RowBuilder out(x);
  for (Eigen::Index i : s.events)
    for (Eigen::Index j = 0; j <= s.rho[i]; ++j)
      if (j != i) out.add(i, j, RowKind::chain);
  return out.finish();
}

LpSolution solve_cone_box_lp(const Eigen::MatrixXd& r, const Eigen::VectorXd& c) {
  const Eigen::Index m = r.rows();
  const Eigen::Index p = r.cols();
  if (c.size() != p) throw std::invalid_argument("lp: objective length mismatch");
  LpSolution sol;
  sol.b = Eigen::VectorXd::Zero(p);
  if (p == 0) return sol;

  constexpr double cost_tol = 1e-11;
  constexpr double pivot_tol = 1e-11;

  // Dual problem min_{y >= 0} ||c + R^T y||_1, written as
  //   R^T y - v+ + v- = -c,  y, v+, v- >= 0,  minimize 1^T (v+ + v-).
  // Columns: y (m), v+ (p), v- (p). At y = 0 the basis {v+ or v-} is feasible.
  const Eigen::Index cols = m + 2 * p;
  Eigen::MatrixXd a(p, cols);
  a.leftCols(m) = r.transpose();
  a.middleCols(m, p) = -Eigen::MatrixXd::Identity(p, p);
  a.rightCols(p) = Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols);
  cost.tail(2 * p).setOnes();

  std::vector<Eigen::Index> basis(p);
  std::vector<int> where(cols, -1);
  Eigen::VectorXd xb(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    basis[k] = c[k] >= 0.0 ? m + k : m + p + k;  // v+_k = c_k or v-_k = -c_k
    where[basis[k]] = static_cast<int>(k);
  }
  Eigen::MatrixXd t(p, cols);
  Eigen::RowVectorXd d(cols);
  Eigen::MatrixXd bmat(p, p);
  Eigen::VectorXd cb(p);
  // tableau B^{-1} A, basic values and reduced costs rebuilt from the
  // original columns; called periodically to shed pivot drift
  const auto refactor = [&] {
    for (Eigen::Index k = 0; k < p; ++k) {
      bmat.col(k) = a.col(basis[k]);
      cb[k] = cost[basis[k]];
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(bmat);
    t = lu.solve(a);
    xb = lu.solve(-c);
    d = cost.transpose() - cb.transpose() * t;
    for (Eigen::Index k = 0; k < p; ++k) d[basis[k]] = 0.0;
  };
  refactor();
  int since_refactor = 0;

  const long guard = 50L * (p + cols) + 1000;
  bool bland = false;
  int degenerate_run = 0;
  for (;;) {
    if (sol.pivots > guard) throw LpError("lp: iteration guard exceeded");
    Eigen::Index q = -1;
    double best = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (where[j] >= 0 || !(d[j] < -cost_tol)) continue;
      if (bland) {
        q = j;
        break;
      }
      if (-d[j] > best) {
        best = -d[j];
        q = j;
      }
    }
    if (q < 0) {
      if (since_refactor == 0) break;
      refactor();  // confirm optimality on a clean tableau
      since_refactor = 0;
      continue;
    }

    Eigen::Index leave = -1;
    double theta = 0.0;
    double leave_mag = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      const double alpha = t(i, q);
      if (!(alpha > pivot_tol)) continue;
      const double limit = std::max(xb[i], 0.0) / alpha;
      bool take = leave < 0 || limit < theta;
      if (!take && limit == theta) take = bland ? basis[i] < basis[leave] : alpha > leave_mag;
      if (take) {
        theta = limit;
        leave = i;
        leave_mag = alpha;
      }
    }
    if (leave < 0) {
      // impossible for an objective bounded below: drift, so rebuild once
      if (since_refactor == 0) throw LpError("lp: unbounded ray in a problem bounded below");
      refactor();
      since_refactor = 0;
      continue;
    }
    ++sol.pivots;
    if (theta <= 1e-12) {
      if (++degenerate_run > 50) bland = true;
    } else {
      degenerate_run = 0;
    }

    xb -= theta * t.col(q);
    xb[leave] = theta;
    where[basis[leave]] = -1;
    basis[leave] = q;
    where[q] = static_cast<int>(leave);
    t.row(leave) /= t(leave, q);
    Eigen::VectorXd col = t.col(q);
    col[leave] = 0.0;
    t.noalias() -= col * t.row(leave);
    d -= d[q] * t.row(leave);
    if (++since_refactor >= 100) {
      refactor();
      since_refactor = 0;
    }
  }

  // primal point from the simplex multipliers: B^T pi = c_B, b = -pi
  sol.b = -bmat.transpose().partialPivLu().solve(cb);
  sol.b = sol.b.cwiseMax(-1.0).cwiseMin(1.0);

  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  for (Eigen::Index k = 0; k < p; ++k)
    if (basis[k] < m) y[basis[k]] = std::max(xb[k], 0.0);
  double dual_value = (c + r.transpose() * y).lpNorm<1>();
  // a residual at the rounding level of R^T z, z = 1 + y, is an exact zero
  const Eigen::VectorXd z = Eigen::VectorXd::Ones(m) + y;
  const double roundoff = 1e3 * std::numeric_limits<double>::epsilon() *
                          (r.cwiseAbs().transpose() * z).lpNorm<1>();
  if (dual_value <= roundoff) dual_value = 0.0;
  const double primal_value = c.dot(sol.b);
  const double scale = std::max(1.0, c.lpNorm<1>());
  if (std::abs(dual_value - primal_value) > 1e-7 * scale)
    throw LpError("lp: primal and dual values disagree");
  if (m > 0 && (r * sol.b).minCoeff() < -1e-7 * std::max(1.0, r.cwiseAbs().maxCoeff()))
    throw LpError("lp: final point violates the cone constraints");
  sol.value = dual_value;
  return sol;
}

double lp_max_weighted(const ConstraintMatrix& dm, const Eigen::VectorXd& weights) {
  if (dm.size() == 0) return 0.0;
  if (weights.size() != dm.size()) throw std::invalid_argument("lp_max: one weight per row");
  const Eigen::VectorXd c = dm.rows.transpose() * weights;
  return std::max(0.0, solve_cone_box_lp(dm.rows, c).value);
}

double lp_max(const ConstraintMatrix& dm) {
  return lp_max_weighted(dm, Eigen::VectorXd::Ones(dm.size()));
}

ExistenceReport check_existence(const SortedCohort& s, const Eigen::MatrixXd& x, double tol) {
  const ConstraintMatrix dm = build_reduced_constraints(s, x);
  ExistenceReport rep;
  rep.rows = dm.size();
  rep.lp_value = lp_max(dm);
  rep.exists = rep.lp_value <= tol;
  if (dm.size() > 0) rep.rank = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(dm.rows).rank();
  rep.full_rank = rep.rank == x.cols();
  return rep;
}

bool mple_exists(const SortedCohort& s, const Eigen::MatrixXd& x, double tol) {
  return lp_max(build_reduced_constraints(s, x)) <= tol;
}

bool brute_force_exists(const SortedCohort& s, const Eigen::MatrixXd& x, double tol) {
  return lp_max(build_full_constraints(s, x)) <= tol;
}

}  // namespace coxht
