#include "coxht/state_eq.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "coxht/errors.hpp"
#include "coxht/numcore/optimize.hpp"

namespace coxht {

namespace {

double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// eigen-decomposition of the symmetric tridiagonal Jacobi matrix
Quadrature golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag, double mass) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw NumericalError("quadrature: eigenvalue solver failed");
  Quadrature rule;
  rule.nodes = es.eigenvalues();
  rule.weights = mass * es.eigenvectors().row(0).transpose().array().square();
  return rule;
}

void symmetrize(Quadrature& rule) {
  const Eigen::Index n = rule.nodes.size();
  for (Eigen::Index k = 0; k < n / 2; ++k) {
    const Eigen::Index m = n - 1 - k;
    const double x = 0.5 * (rule.nodes[m] - rule.nodes[k]);
    const double w = 0.5 * (rule.weights[m] + rule.weights[k]);
    rule.nodes[k] = -x;
    rule.nodes[m] = x;
    rule.weights[k] = rule.weights[m] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  rule.weights /= rule.weights.sum();
}

std::pair<double, double> tensor_constants(double kappa, double lambda, double lo, double hi, int nodes) {
  const Quadrature gh = gauss_hermite_normal(nodes);
  const Quadrature gl = gauss_legendre_uniform(nodes, lo, hi);
  double s0 = 0.0;
  double s1 = 0.0;
  // pair z with -z so that s1 vanishes exactly at kappa = 0
  const auto inner = [&](double z) {
    double acc = 0.0;
    const double rate = lambda * std::exp(kappa * z);
    for (Eigen::Index l = 0; l < gl.nodes.size(); ++l) acc += gl.weights[l] * std::exp(-rate * gl.nodes[l]);
    return acc;
  };
  const Eigen::Index n = gh.nodes.size();
  for (Eigen::Index k = 0; k < n / 2; ++k) {
    const double z = gh.nodes[n - 1 - k];
    const double w = gh.weights[k];
    const double plus = inner(z);
    const double minus = inner(-z);
    s0 += w * (plus + minus);
    s1 += w * z * (plus - minus);
  }
  if (n % 2 == 1) s0 += gh.weights[n / 2] * inner(0.0);
  return {s0, s1};
}

}  // namespace

Quadrature gauss_hermite_normal(int count) {
  if (count < 1) throw std::invalid_argument("gauss_hermite_normal: count must be positive");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(count);
  Eigen::VectorXd off(std::max(count - 1, 0));
  for (int k = 1; k < count; ++k) off[k - 1] = std::sqrt(static_cast<double>(k));
  Quadrature rule = golub_welsch(diag, off, 1.0);
  symmetrize(rule);
  return rule;
}

Quadrature gauss_legendre_uniform(int count, double lo, double hi) {
  if (count < 1) throw std::invalid_argument("gauss_legendre_uniform: count must be positive");
  if (!(lo < hi)) throw std::invalid_argument("gauss_legendre_uniform: need lo < hi");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(count);
  Eigen::VectorXd off(std::max(count - 1, 0));
  for (int k = 1; k < count; ++k) off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  Quadrature rule = golub_welsch(diag, off, 1.0);
  symmetrize(rule);
  rule.nodes = (0.5 * (lo + hi)) + (0.5 * (hi - lo)) * rule.nodes.array();
  return rule;
}

StateConstants censoring_expectations(double kappa, double lambda, double censor_lo, double censor_hi,
                                      double delta, int nodes) {
  if (nodes < 16) throw std::invalid_argument("censoring_expectations: nodes must be at least 16");
  if (!(lambda > 0.0)) throw std::invalid_argument("censoring_expectations: lambda must be positive");
  if (!(censor_lo >= 0.0 && censor_lo < censor_hi))
    throw std::invalid_argument("censoring_expectations: need 0 <= censor_lo < censor_hi");
  auto coarse = tensor_constants(kappa, lambda, censor_lo, censor_hi, nodes);
  for (int count = nodes; count <= 4096; count *= 2) {
    const auto fine = tensor_constants(kappa, lambda, censor_lo, censor_hi, 2 * count);
    if (std::abs(fine.first - coarse.first) <= 1e-8 && std::abs(fine.second - coarse.second) <= 1e-8) {
      StateConstants c;
      c.s0 = fine.first;
      c.s1 = fine.second;
      c.kappa = kappa;
      c.delta = delta;
      return c;
    }
    coarse = fine;
  }
  throw NumericalError("censoring_expectations: quadrature did not stabilize under node doubling");
}

GnFunction::GnFunction(const SortedCohort& s) : n_(s.n()), block_of_(static_cast<std::size_t>(s.n())) {
  for (Eigen::Index i = 0; i < n_; ++i) {
    if (block_end_.empty() || s.rho[i] != block_end_.back()) {
      block_end_.push_back(s.rho[i]);
      events_in_block_.push_back(0);
    }
    block_of_[i] = static_cast<Eigen::Index>(block_end_.size()) - 1;
    events_in_block_.back() += s.delta[i];
  }
}

double GnFunction::value(const Eigen::VectorXd& u) const {
  if (u.size() != n_) throw std::invalid_argument("GnFunction: dimension mismatch");
  const double log_n = std::log(static_cast<double>(n_));
  double acc = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  Eigen::Index j = 0;
  for (std::size_t b = 0; b < block_end_.size(); ++b) {
    for (; j <= block_end_[b]; ++j) acc = log_add_exp(acc, u[j]);
    if (events_in_block_[b] > 0) total += events_in_block_[b] * (acc - log_n);
  }
  return total;
}

double GnFunction::value_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad, Point& pt) const {
  if (u.size() != n_) throw std::invalid_argument("GnFunction: dimension mismatch");
  const std::size_t nb = block_end_.size();
  const double log_n = std::log(static_cast<double>(n_));
  pt.log_s.resize(static_cast<Eigen::Index>(nb));
  pt.ratio.resize(n_);
  pt.weight.resize(static_cast<Eigen::Index>(nb));
  pt.weight2.resize(static_cast<Eigen::Index>(nb));

  double acc = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  Eigen::Index j = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    const Eigen::Index start = j;
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = start; k <= block_end_[b]; ++k) m = std::max(m, u[k]);
    double sum = 0.0;
    for (Eigen::Index k = start; k <= block_end_[b]; ++k) sum += std::exp(u[k] - m);
    acc = log_add_exp(acc, m + std::log(sum));
    pt.log_s[static_cast<Eigen::Index>(b)] = acc;
    for (; j <= block_end_[b]; ++j) pt.ratio[j] = std::exp(u[j] - acc);
    if (events_in_block_[b] > 0) total += events_in_block_[b] * (acc - log_n);
  }
  for (std::size_t bb = nb; bb-- > 0;) {
    const Eigen::Index b = static_cast<Eigen::Index>(bb);
    double w = events_in_block_[bb];
    double w2 = events_in_block_[bb];
    if (bb + 1 < nb) {
      const double f = std::exp(pt.log_s[b] - pt.log_s[b + 1]);
      w += pt.weight[b + 1] * f;
      w2 += pt.weight2[b + 1] * f * f;
    }
    pt.weight[b] = w;
    pt.weight2[b] = w2;
  }
  grad.resize(n_);
  for (Eigen::Index k = 0; k < n_; ++k) grad[k] = pt.ratio[k] * pt.weight[block_of_[k]];
  if (!std::isfinite(total)) throw NumericalError("GnFunction: non-finite value");
  return total;
}

Eigen::VectorXd GnFunction::hessian_times(const Point& pt, const Eigen::VectorXd& v) const {
  const std::size_t nb = block_end_.size();
  Eigen::VectorXd t(static_cast<Eigen::Index>(nb));
  double prefix = 0.0;
  Eigen::Index j = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    const Eigen::Index bi = static_cast<Eigen::Index>(b);
    if (b > 0) prefix *= std::exp(pt.log_s[bi - 1] - pt.log_s[bi]);
    for (; j <= block_end_[b]; ++j) prefix += pt.ratio[j] * v[j];
    t[bi] = prefix;
  }
  Eigen::VectorXd back(static_cast<Eigen::Index>(nb));
  for (std::size_t bb = nb; bb-- > 0;) {
    const Eigen::Index b = static_cast<Eigen::Index>(bb);
    double val = events_in_block_[bb] * t[b];
    if (bb + 1 < nb) val += back[b + 1] * std::exp(pt.log_s[b] - pt.log_s[b + 1]);
    back[b] = val;
  }
  Eigen::VectorXd out(n_);
  for (Eigen::Index k = 0; k < n_; ++k) {
    const Eigen::Index b = block_of_[k];
    out[k] = pt.ratio[k] * (v[k] * pt.weight[b] - back[b]);
  }
  return out;
}

Eigen::VectorXd GnFunction::hessian_diagonal(const Point& pt) const {
  Eigen::VectorXd d(n_);
  for (Eigen::Index k = 0; k < n_; ++k) {
    const Eigen::Index b = block_of_[k];
    const double r = pt.ratio[k];
    d[k] = std::max(0.0, r * pt.weight[b] - r * r * pt.weight2[b]);
  }
  return d;
}

EnvelopeContext::EnvelopeContext(ReducedCohort r, Eigen::VectorXd hv)
    : reduced(std::move(r)), h(std::move(hv)), gn(reduced.sorted) {
  if (h.size() != reduced.n()) throw std::invalid_argument("EnvelopeContext: h must have length n");
}

EnvelopeContext make_envelope_context(const ModelConfig& config, Eigen::Index n_rep, std::uint64_t seed,
                                      std::uint64_t index) {
  if (n_rep < 1) throw std::invalid_argument("make_envelope_context: n_rep must be positive");
  RngStream cohort_stream(seed, 2 * index);
  RngStream h_stream(seed, 2 * index + 1);
  ReducedCohort reduced = reduce_to_1d(config, n_rep, cohort_stream);
  Eigen::VectorXd h = normal_sample(h_stream, n_rep);
  return EnvelopeContext(std::move(reduced), std::move(h));
}

StateConstants empirical_constants(const EnvelopeContext& ctx, double kappa, double delta) {
  const Eigen::VectorXd d = ctx.reduced.sorted.delta.cast<double>();
  const double n = static_cast<double>(ctx.n());
  StateConstants c;
  c.s0 = 1.0 - d.sum() / n;
  c.s1 = -d.dot(ctx.reduced.q) / n;
  c.kappa = kappa;
  c.delta = delta;
  return c;
}

ProxResult prox_Gn(const EnvelopeContext& ctx, const Eigen::VectorXd& xi, double c, const ProxOptions& options,
                   const Eigen::VectorXd* start) {
  if (!(c > 0.0)) throw std::invalid_argument("prox_Gn: c must be positive");
  if (xi.size() != ctx.n()) throw std::invalid_argument("prox_Gn: xi must have length n");
  const GnFunction& gn = ctx.gn;
  const double target = options.tol * std::max(1.0, xi.norm());

  ProxResult res;
  res.u = start != nullptr && start->size() == xi.size() ? *start : xi;
  GnFunction::Point pt;
  Eigen::VectorXd grad_g;
  const auto psi = [&](const Eigen::VectorXd& u, Eigen::VectorXd& g, GnFunction::Point& p) {
    const double v = gn.value_gradient(u, g, p) + 0.5 * c * (u - xi).squaredNorm();
    g += c * (u - xi);
    return v;
  };
  Eigen::VectorXd g;
  double f = psi(res.u, g, pt);
  Eigen::VectorXd trial_g;
  GnFunction::Point trial_pt;

  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    res.grad_norm = g.norm();
    if (res.grad_norm <= target) {
      res.converged = true;
      return res;
    }
    // preconditioned CG on (H + c I) d = -g
    const Eigen::VectorXd precond = (gn.hessian_diagonal(pt).array() + c).inverse();
    const double forcing = std::min(0.5, std::sqrt(res.grad_norm)) * res.grad_norm;
    Eigen::VectorXd d = Eigen::VectorXd::Zero(g.size());
    Eigen::VectorXd r = -g;
    Eigen::VectorXd z = precond.cwiseProduct(r);
    Eigen::VectorXd dir = z;
    double rz = r.dot(z);
    for (int k = 0; k < 500 && r.norm() > forcing; ++k) {
      const Eigen::VectorXd ad = gn.hessian_times(pt, dir) + c * dir;
      const double curv = dir.dot(ad);
      if (!(curv > 0.0)) break;
      const double alpha = rz / curv;
      d += alpha * dir;
      r -= alpha * ad;
      z = precond.cwiseProduct(r);
      const double rz_next = r.dot(z);
      dir = z + (rz_next / rz) * dir;
      rz = rz_next;
    }
    if (d.squaredNorm() == 0.0) d = -precond.cwiseProduct(g);

    const double slope = g.dot(d);
    // predicted decrease below the rounding level of Psi: judge steps by the gradient
    const bool flat = -slope <= 1e-10 * (1.0 + std::abs(f));
    double step = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      const Eigen::VectorXd trial = res.u + step * d;
      double ft = 0.0;
      try {
        ft = psi(trial, trial_g, trial_pt);
      } catch (const NumericalError&) {
        step *= 0.5;
        continue;
      }
      const bool ok = flat ? trial_g.norm() < res.grad_norm : ft < f && ft <= f + 1e-4 * step * slope;
      if (ok) {
        res.u = trial;
        f = ft;
        g.swap(trial_g);
        std::swap(pt, trial_pt);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || step * d.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + res.u.lpNorm<Eigen::Infinity>())) break;
  }
  res.grad_norm = g.norm();
  res.converged = res.grad_norm <= target;
  return res;
}

double moreau_envelope(const EnvelopeContext& ctx, const Eigen::VectorXd& xi, double inv_c,
                       const ProxOptions& options) {
  if (!(inv_c > 0.0)) throw std::invalid_argument("moreau_envelope: inv_c must be positive");
  const ProxResult p = prox_Gn(ctx, xi, 1.0 / inv_c, options);
  return ctx.gn.value(p.u) + (p.u - xi).squaredNorm() / (2.0 * inv_c);
}

double saddle_objective(const EnvelopeContext& ctx, const StateConstants& k, double a, double b, double r,
                        WarmStart* warm) {
  if (!(b > 0.0) || !(r > 0.0)) throw std::invalid_argument("saddle_objective: need b > 0 and r > 0");
  const double sd = std::sqrt(k.delta);
  const double inv_c = b * sd / r;
  const double c = 1.0 / inv_c;
  const Eigen::VectorXd xi = (k.kappa * a) * ctx.reduced.q + b * ctx.h + inv_c * ctx.reduced.sorted.delta.cast<double>();

  Eigen::VectorXd start;
  if (warm != nullptr && warm->gradient.size() == xi.size()) start = xi - warm->gradient / c;
  const ProxResult p = prox_Gn(ctx, xi, c, {}, start.size() ? &start : nullptr);
  const double env = ctx.gn.value(p.u) + 0.5 * c * (p.u - xi).squaredNorm();
  if (warm != nullptr) warm->gradient = c * (xi - p.u);

  const double n = static_cast<double>(ctx.n());
  const double f = env / n - 0.5 * inv_c * (1.0 - k.s0) + k.kappa * a * k.s1 - 0.5 * r * sd * b;
  if (!std::isfinite(f)) {
    std::ostringstream msg;
    msg << "saddle_objective: non-finite value at (a, b, r) = (" << a << ", " << b << ", " << r << ")";
    throw NumericalError(msg.str());
  }
  return f;
}

SaddleGradient saddle_gradient(const EnvelopeContext& ctx, const StateConstants& k, double a, double b, double r,
                               WarmStart* warm) {
  if (!(b > 0.0) || !(r > 0.0)) throw std::invalid_argument("saddle_gradient: need b > 0 and r > 0");
  const double sd = std::sqrt(k.delta);
  const double inv_c = b * sd / r;
  const double c = 1.0 / inv_c;
  const Eigen::VectorXd d = ctx.reduced.sorted.delta.cast<double>();
  const Eigen::VectorXd xi = (k.kappa * a) * ctx.reduced.q + b * ctx.h + inv_c * d;

  Eigen::VectorXd start;
  if (warm != nullptr && warm->gradient.size() == xi.size()) start = xi - warm->gradient / c;
  const ProxResult p = prox_Gn(ctx, xi, c, {}, start.size() ? &start : nullptr);
  const Eigen::VectorXd g = c * (xi - p.u);
  if (warm != nullptr) warm->gradient = g;

  const double n = static_cast<double>(ctx.n());
  const double env = ctx.gn.value(p.u) + 0.5 * inv_c * g.squaredNorm();
  const double d_inv_c = (g.dot(d) - 0.5 * g.squaredNorm()) / n - 0.5 * (1.0 - k.s0);
  SaddleGradient out;
  out.value = env / n - 0.5 * inv_c * (1.0 - k.s0) + k.kappa * a * k.s1 - 0.5 * r * sd * b;
  out.grad[0] = k.kappa * (g.dot(ctx.reduced.q) / n + k.s1);
  out.grad[1] = g.dot(ctx.h) / n + (sd / r) * d_inv_c - 0.5 * r * sd;
  out.grad[2] = -(b * sd / (r * r)) * d_inv_c - 0.5 * sd * b;
  if (!std::isfinite(out.value) || !std::isfinite(out.grad[0]) || !std::isfinite(out.grad[1]) ||
      !std::isfinite(out.grad[2])) {
    std::ostringstream msg;
    msg << "saddle_gradient: non-finite value at (a, b, r) = (" << a << ", " << b << ", " << r << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

namespace {

struct InnerMax {
  double r = 0.0;
  double value = 0.0;
};

class Saddle {
 public:
  Saddle(const EnvelopeContext& ctx, const StateConstants& k, const StateSolveOptions& o)
      : ctx_(ctx), k_(k), o_(o) {}

  double objective(double a, double b, double r) {
    ++evaluations;
    return saddle_objective(ctx_, k_, a, b, r, &warm_);
  }

  InnerMax max_r(double a, double b) {
    const int m = std::max(o_.scan_points, 3);
    std::vector<double> grid(static_cast<std::size_t>(m));
    std::vector<double> vals(grid.size());
    std::size_t best = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid[i] = o_.log_r_lo + (o_.log_r_hi - o_.log_r_lo) * static_cast<double>(i) / (m - 1);
      vals[i] = objective(a, b, std::exp(grid[i]));
      if (vals[i] > vals[best]) best = i;
    }
    const double lo = grid[best == 0 ? 0 : best - 1];
    const double hi = grid[std::min(best + 1, grid.size() - 1)];
    const ScalarExtremum e = golden_section_extremum(
        [&](double lr) { return objective(a, b, std::exp(lr)); }, lo, hi, 1e-7, Sense::maximize);
    if (e.value >= vals[best]) return {std::exp(e.x), e.value};
    return {std::exp(grid[best]), vals[best]};
  }

  std::array<double, 3> residuals(double a, double b, double r) {
    const auto central = [&](auto&& f, double x, bool positive) {
      double step = 1e-4 * std::max(1.0, std::abs(x));
      if (positive) step = std::min(step, 0.5 * x);
      return (f(x + step) - f(x - step)) / (2.0 * step);
    };
    return {central([&](double x) { return objective(x, b, r); }, a, false),
            central([&](double x) { return objective(a, x, r); }, b, true),
            central([&](double x) { return objective(a, b, x); }, r, true)};
  }

  int evaluations = 0;

 private:
  const EnvelopeContext& ctx_;
  const StateConstants& k_;
  const StateSolveOptions& o_;
  WarmStart warm_;
};

double max_abs(const std::array<double, 3>& v) {
  return std::max({std::abs(v[0]), std::abs(v[1]), std::abs(v[2])});
}

}  // namespace

StateSolution solve_state_equations(const EnvelopeContext& ctx, const StateConstants& consts,
                                    std::array<double, 3> init, const StateSolveOptions& options) {
  if (!(init[1] > 0.0) || !(init[2] > 0.0)) throw std::invalid_argument("solve_state_equations: need b0, r0 > 0");
  if (!(consts.delta > 0.0)) throw std::invalid_argument("solve_state_equations: delta must be positive");
  Saddle saddle(ctx, consts, options);

  const std::array<std::array<double, 2>, 3> perturb{{{1.0, 1.0}, {1.25, 0.7}, {0.8, 1.5}}};
  StateSolution best;
  double best_res = std::numeric_limits<double>::infinity();
  const int starts = std::max(1, std::min(options.starts, 3));
  for (int s = 0; s < starts; ++s) {
    Eigen::Vector2d x0(init[0] * perturb[s][0], std::log(init[1] * perturb[s][1]));
    NelderMeadOptions nm;
    nm.tol = options.tol;
    nm.initial_step = 0.2;
    NelderMeadResult fit;
    try {
      fit = nelder_mead_min([&](const Eigen::VectorXd& x) { return saddle.max_r(x[0], std::exp(x[1])).value; }, x0,
                            nm);
    } catch (const NumericalError&) {
      continue;
    }
    StateSolution sol;
    sol.a_star = fit.x[0];
    sol.b_star = std::exp(fit.x[1]);
    const InnerMax inner = saddle.max_r(sol.a_star, sol.b_star);
    sol.r_star = inner.r;
    sol.saddle_value = inner.value;
    sol.v_star = 1.0 / (sol.b_star * std::sqrt(consts.delta));
    sol.residuals = saddle.residuals(sol.a_star, sol.b_star, sol.r_star);
    const double res = max_abs(sol.residuals);
    sol.converged = fit.converged && res <= options.residual_tol;
    if (res < best_res) {
      best = sol;
      best_res = res;
    }
    if (sol.converged) break;
  }
  best.evaluations = saddle.evaluations;
  if (!std::isfinite(best_res)) throw NumericalError("solve_state_equations: every start failed");
  return best;
}

StateSolution refine_state_solution(const EnvelopeContext& ctx, const StateConstants& consts,
                                    const StateSolution& init, const RefineOptions& options) {
  if (!(init.b_star > 0.0) || !(init.r_star > 0.0))
    throw std::invalid_argument("refine_state_solution: need b > 0 and r > 0");
  WarmStart warm;
  int evaluations = 0;
  // gradient in x = (a, log b, log r)
  const auto grad = [&](const Eigen::Vector3d& x, double* value = nullptr) {
    ++evaluations;
    const SaddleGradient s = saddle_gradient(ctx, consts, x[0], std::exp(x[1]), std::exp(x[2]), &warm);
    if (value != nullptr) *value = s.value;
    return Eigen::Vector3d(s.grad[0], s.grad[1] * std::exp(x[1]), s.grad[2] * std::exp(x[2]));
  };
  const auto raw = [](const Eigen::Vector3d& x, const Eigen::Vector3d& gx) {
    return Eigen::Vector3d(gx[0], gx[1] / std::exp(x[1]), gx[2] / std::exp(x[2]));
  };

  Eigen::Vector3d x(init.a_star, std::log(init.b_star), std::log(init.r_star));
  double value = 0.0;
  Eigen::Vector3d g = grad(x, &value);
  bool done = raw(x, g).cwiseAbs().maxCoeff() <= options.grad_tol;
  for (int it = 0; it < options.max_iter && !done; ++it) {
    Eigen::Matrix3d jac;
    try {
      for (int j = 0; j < 3; ++j) {
        Eigen::Vector3d hi = x, lo = x;
        hi[j] += options.fd_step;
        lo[j] -= options.fd_step;
        jac.col(j) = (grad(hi) - grad(lo)) / (2.0 * options.fd_step);
      }
    } catch (const std::exception&) {
      break;
    }
    const Eigen::Vector3d step = -jac.fullPivLu().solve(g);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 20; ++k, t *= 0.5) {
      const Eigen::Vector3d trial = x + t * step;
      double trial_value = 0.0;
      Eigen::Vector3d trial_g;
      try {
        trial_g = grad(trial, &trial_value);
      } catch (const std::exception&) {
        continue;
      }
      if (trial_g.norm() < g.norm()) {
        x = trial;
        g = trial_g;
        value = trial_value;
        moved = true;
        break;
      }
    }
    done = raw(x, g).cwiseAbs().maxCoeff() <= options.grad_tol;
    if (!moved || (t * step).cwiseAbs().maxCoeff() <= 1e-12) break;
  }

  StateSolution sol;
  sol.a_star = x[0];
  sol.b_star = std::exp(x[1]);
  sol.r_star = std::exp(x[2]);
  sol.v_star = 1.0 / (sol.b_star * std::sqrt(consts.delta));
  sol.saddle_value = value;
  StateSolveOptions so;
  Saddle saddle(ctx, consts, so);
  sol.residuals = saddle.residuals(sol.a_star, sol.b_star, sol.r_star);
  sol.evaluations = init.evaluations + evaluations + saddle.evaluations;
  sol.converged = done && max_abs(sol.residuals) <= options.residual_tol;
  return sol;
}

double k_solve(double b1, double b2, double b3) {
  if (!(b3 > 0.0) || !(b2 >= 0.0) || !std::isfinite(b1))
    throw std::invalid_argument("k_solve: requires b3 > 0, b2 >= 0 and finite b1 for a unique positive root");
  if (b2 == 0.0) return std::exp(b1);
  // monotone in t = log u; f(b1) = b2 e^{b1} >= 0
  const auto f = [&](double t) { return b3 * (t - b1) + b2 * std::exp(t); };
  double lo = b1 - 1.0;
  while (f(lo) > 0.0) lo = b1 - 2.0 * (b1 - lo);
  double t = solve_scalar_root(f, lo, b1, 1e-15);
  double u = std::exp(t);
  for (int k = 0; k < 5; ++k) {
    const double g = b3 * (std::log(u) - b1) + b2 * u;
    const double next = u - g / (b3 / u + b2);
    if (!(next > 0.0)) break;
    u = next;
  }
  if (!(u > 0.0) || !std::isfinite(u)) throw NumericalError("k_solve: no positive root found");
  return u;
}

TheoreticalErrors theoretical_errors(const StateSolution& s, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("theoretical_errors: kappa must be positive");
  TheoreticalErrors e;
  e.rel_err_sq = (s.a_star - 1.0) * (s.a_star - 1.0) + s.b_star * s.b_star / (kappa * kappa);
  e.proj_err_sq = s.b_star * s.b_star;
  return e;
}

}  // namespace coxht
