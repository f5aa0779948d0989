#include "coxht/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coxht/errors.hpp"
#include "coxht/numcore/optimize.hpp"
#include "coxht/numcore/parallel.hpp"
#include "coxht/numcore/rng.hpp"

namespace coxht {

ConeM build_cone(const SortedCohort& s) {
  const Eigen::Index n = s.n();
  ConeM cone;
  cone.halfspaces = HalfspaceSet(n);
  cone.node_of.assign(n, -1);
  cone.dominates.assign(n, -1);

  for (std::size_t l = 0; l < s.events.size(); ++l) {
    const Eigen::Index e = s.events[l];
    const bool tied_with_previous = l > 0 && s.y[s.events[l - 1]] == s.y[e];
    if (!tied_with_previous) cone.nodes.emplace_back();
    cone.nodes.back().push_back(e);
    cone.node_of[e] = static_cast<Eigen::Index>(cone.nodes.size()) - 1;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index k = s.next_event[i];
    if (k < 0) continue;
    cone.halfspaces.add_difference(i, k);
    if (s.delta[i] == 0) cone.dominates[i] = cone.node_of[k];
  }
  for (const auto& group : s.tie_groups)
    for (std::size_t t = 0; t + 1 < group.size(); ++t) cone.halfspaces.add_equality(group[t], group[t + 1]);
  return cone;
}

namespace {

struct Pool {
  std::size_t first = 0;  // chain nodes [first, last]
  std::size_t last = 0;
  double quad_sum = 0.0;  // coordinates tied to the pool value
  double quad_count = 0.0;
  std::vector<double> hinge;  // coordinates raised to the pool value when below it, ascending
  double value = 0.0;

  // minimizer of sum (c - z_q)^2 + sum (c - z_h)_+^2
  void solve() {
    double num = quad_sum;
    double den = quad_count;
    double c = num / den;
    for (double h : hinge) {
      if (!(h < c)) break;
      num += h;
      den += 1.0;
      c = num / den;
    }
    value = c;
  }
};

}  // namespace

Eigen::VectorXd project_cone(const ConeM& cone, const Eigen::VectorXd& z) {
  const Eigen::Index n = cone.dimension();
  if (z.size() != n) throw std::invalid_argument("project_cone: dimension mismatch");
  const std::size_t k = cone.nodes.size();

  std::vector<std::vector<double>> hinges(k);
  for (Eigen::Index i = 0; i < n; ++i)
    if (cone.dominates[i] >= 0) hinges[cone.dominates[i]].push_back(z[i]);

  std::vector<Pool> stack;
  stack.reserve(k);
  for (std::size_t node = 0; node < k; ++node) {
    Pool p;
    p.first = p.last = node;
    for (Eigen::Index e : cone.nodes[node]) {
      p.quad_sum += z[e];
      p.quad_count += 1.0;
    }
    p.hinge = std::move(hinges[node]);
    std::sort(p.hinge.begin(), p.hinge.end());
    p.solve();
    stack.push_back(std::move(p));
    // chain values must be nonincreasing
    while (stack.size() >= 2 && stack[stack.size() - 2].value < stack.back().value) {
      Pool top = std::move(stack.back());
      stack.pop_back();
      Pool& below = stack.back();
      below.last = top.last;
      below.quad_sum += top.quad_sum;
      below.quad_count += top.quad_count;
      std::vector<double> merged(below.hinge.size() + top.hinge.size());
      std::merge(below.hinge.begin(), below.hinge.end(), top.hinge.begin(), top.hinge.end(), merged.begin());
      below.hinge = std::move(merged);
      below.solve();
    }
  }

  std::vector<double> node_value(k);
  for (const Pool& p : stack)
    for (std::size_t node = p.first; node <= p.last; ++node) node_value[node] = p.value;

  Eigen::VectorXd m = z;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (cone.node_of[i] >= 0) {
      m[i] = node_value[cone.node_of[i]];
    } else if (cone.dominates[i] >= 0) {
      m[i] = std::max(z[i], node_value[cone.dominates[i]]);
    }
  }
  return m;
}

QpResult qp_value(const ConeM& cone, const Eigen::VectorXd& q, const Eigen::VectorXd& h, double tol,
                  ProjectionMethod method) {
  const Eigen::Index n = cone.dimension();
  if (h.size() != n || q.size() != n) throw std::invalid_argument("qp_value: h and q must have length n");
  QpResult res;
  const auto project = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    ++res.evaluations;
    if (method == ProjectionMethod::exact) return project_cone(cone, z);
    DykstraOptions opts;
    opts.tol = 1e-12;
    opts.max_iter = 200000;
    const DykstraResult d = dykstra_project(z, cone.halfspaces, opts);
    if (!d.converged) throw NumericalError("qp_value: Dykstra projection did not converge");
    return d.projection;
  };

  const double qq = q.squaredNorm();
  if (qq > 0.0) {
    // <q, residual(t)> is nonincreasing in t
    const auto slope = [&](double t) {
      const Eigen::VectorXd zt = h - t * q;
      return q.dot(zt - project(zt));
    };
    const double scale = std::max(1.0, std::sqrt(qq) * h.norm());
    double lo = -1.0;
    double hi = 1.0;
    while (slope(lo) < 0.0 && lo > -1e8) lo *= 2.0;
    while (slope(hi) > 0.0 && hi < 1e8) hi *= 2.0;
    const double flo = slope(lo);
    const double fhi = slope(hi);
    if (flo < 0.0) {
      res.t = lo;
    } else if (fhi > 0.0) {
      res.t = hi;
    } else {
      res.t = solve_scalar_root(slope, lo, hi, tol * scale);
    }
  }
  const Eigen::VectorXd z = h - res.t * q;
  res.m = project(z);
  res.value = (z - res.m).squaredNorm() / static_cast<double>(n);
  return res;
}

QpResult qp_value(const ReducedCohort& reduced, const Eigen::VectorXd& h, double tol, ProjectionMethod method) {
  return qp_value(build_cone(reduced), reduced.q, h, tol, method);
}

HEstimate estimate_h(const ModelConfig& config, Eigen::Index n, int reps, std::uint64_t seed, int workers) {
  if (reps < 1) throw std::invalid_argument("estimate_h: reps must be positive");
  if (n < 1) throw std::invalid_argument("estimate_h: n must be positive");
  std::vector<double> values(static_cast<std::size_t>(reps));
  parallel_for(values.size(), workers, [&](std::size_t r) {
    RngStream stream(seed, r);
    const ReducedCohort reduced = reduce_to_1d(config, n, stream);
    const Eigen::VectorXd h = normal_sample(stream, n);
    values[r] = qp_value(reduced, h).value;
  });
  HEstimate est;
  est.reps = reps;
  double sum = 0.0;
  for (double v : values) sum += v;
  est.mean = sum / reps;
  if (reps > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - est.mean) * (v - est.mean);
    est.stderr = std::sqrt(ss / (reps - 1) / reps);
  }
  return est;
}

std::vector<BoundaryPoint> boundary_curve(const ModelConfig& config, const std::vector<double>& kappa_grid,
                                          Eigen::Index n, int reps, std::uint64_t seed, int workers) {
  if (kappa_grid.empty()) throw std::invalid_argument("boundary_curve: empty kappa grid");
  for (std::size_t i = 1; i < kappa_grid.size(); ++i)
    if (!(kappa_grid[i] > kappa_grid[i - 1])) throw std::invalid_argument("boundary_curve: kappa grid must increase");
  std::vector<BoundaryPoint> out;
  for (double kappa : kappa_grid) {
    ModelConfig c = config;
    c.kappa = kappa;
    const HEstimate est = estimate_h(c, n, reps, seed, workers);
    out.push_back({kappa, est.mean, est.stderr, n, reps});
  }
  return out;
}

}  // namespace coxht
