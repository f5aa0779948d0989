#include "coxht/coxfit.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "coxht/errors.hpp"
#include "coxht/numcore/special.hpp"

namespace coxht {

namespace {

void check_dims(const SortedCohort& s, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  if (x.rows() != s.n() || x.cols() != beta.size())
    throw std::invalid_argument("coxfit: dimensions of x, beta and cohort disagree");
}

}  // namespace

double partial_loglik_eta(const SortedCohort& s, const Eigen::VectorXd& eta) {
  const Eigen::Index n = s.n();
  if (eta.size() != n) throw std::invalid_argument("partial_loglik: eta has wrong length");
  const double log_n = std::log(static_cast<double>(n));
  // streaming log-sum-exp over the prefix risk sets
  double shift = -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  double total = 0.0;
  Eigen::Index block_start = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (eta[j] > shift) {
      acc *= std::exp(shift - eta[j]);
      shift = eta[j];
    }
    acc += std::exp(eta[j] - shift);
    if (s.rho[j] != j) continue;
    const double log_risk = shift + std::log(acc) - log_n;
    for (Eigen::Index i = block_start; i <= j; ++i)
      if (s.delta[i] == 1) total += eta[i] - log_risk;
    block_start = j + 1;
  }
  return total / static_cast<double>(n);
}

double partial_loglik(const SortedCohort& s, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  check_dims(s, x, beta);
  return partial_loglik_eta(s, x * beta);
}

ScoreInformation score_and_information(const SortedCohort& s, const Eigen::MatrixXd& x,
                                       const Eigen::VectorXd& beta) {
  check_dims(s, x, beta);
  const Eigen::Index n = s.n();
  const Eigen::Index p = x.cols();
  const Eigen::VectorXd eta = x * beta;
  const double log_n = std::log(static_cast<double>(n));

  ScoreInformation out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.info = Eigen::MatrixXd::Zero(p, p);

  double shift = -std::numeric_limits<double>::infinity();
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);  // lower triangle only
  Eigen::VectorXd event_sum(p);
  double total = 0.0;
  Eigen::Index block_start = 0;

  for (Eigen::Index j = 0; j < n; ++j) {
    if (eta[j] > shift) {
      // the running maximum rarely moves; rescaling keeps every sum finite
      const double r = std::exp(shift - eta[j]);
      if (s0 > 0.0) {
        s0 *= r;
        s1 *= r;
        s2.triangularView<Eigen::Lower>() *= r;
      }
      shift = eta[j];
    }
    const double w = std::exp(eta[j] - shift);
    s0 += w;
    s1.noalias() += w * x.row(j).transpose();
    s2.selfadjointView<Eigen::Lower>().rankUpdate(x.row(j).transpose(), w);
    if (s.rho[j] != j) continue;

    int d = 0;
    event_sum.setZero();
    for (Eigen::Index i = block_start; i <= j; ++i) {
      if (s.delta[i] != 1) continue;
      ++d;
      event_sum += x.row(i).transpose();
      total += eta[i];
    }
    block_start = j + 1;
    if (d == 0) continue;
    total -= d * (shift + std::log(s0) - log_n);
    const Eigen::VectorXd mean = s1 / s0;
    out.gradient += event_sum - d * mean;
    out.info.triangularView<Eigen::Lower>() += d * (s2 / s0);
    out.info.selfadjointView<Eigen::Lower>().rankUpdate(mean, -static_cast<double>(d));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loglik = total * inv_n;
  out.gradient *= inv_n;
  out.info.triangularView<Eigen::Lower>() *= inv_n;
  out.info = out.info.selfadjointView<Eigen::Lower>();
  return out;
}

namespace {

bool is_singular(const Eigen::LDLT<Eigen::MatrixXd>& ldlt, double scale) {
  if (ldlt.info() != Eigen::Success) return true;
  return ldlt.vectorD().minCoeff() <= 1e-10 * std::max(scale, 1e-300);
}

double diag_scale(const Eigen::MatrixXd& info) { return info.diagonal().cwiseAbs().maxCoeff(); }

}  // namespace

FitResult fit_mple(const SortedCohort& s, const Eigen::MatrixXd& x, const Eigen::VectorXd& init,
                   const FitOptions& options) {
  const Eigen::Index p = x.cols();
  FitResult res;
  res.beta_hat = init.size() == 0 ? Eigen::VectorXd::Zero(p) : init;
  check_dims(s, x, res.beta_hat);
  if (!res.beta_hat.allFinite()) throw std::invalid_argument("fit_mple: initial value not finite");
  const double limit = options.divergence_factor * std::sqrt(static_cast<double>(p));

  ScoreInformation cur = score_and_information(s, x, res.beta_hat);
  double scale0 = 0.0;
  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    res.loglik = cur.loglik;
    res.grad_norm = cur.gradient.cwiseAbs().maxCoeff();
    if (!std::isfinite(res.loglik) || !cur.gradient.allFinite())
      throw NumericalError("fit_mple: non-finite partial likelihood");

    Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.info);
    if (res.iterations == 0) {
      scale0 = diag_scale(cur.info);
      if (is_singular(ldlt, scale0)) throw SingularInformationError("fit_mple: singular information matrix");
    } else if (is_singular(ldlt, scale0)) {
      // curvature collapsed relative to the start: the likelihood has flattened
      // out along a ray, which only happens when no maximizer exists
      res.diverged = true;
      return res;
    }
    const Eigen::VectorXd dir = ldlt.solve(cur.gradient);
    if (!dir.allFinite()) throw NumericalError("fit_mple: non-finite Newton direction");

    if (res.grad_norm <= options.tol && dir.cwiseAbs().maxCoeff() <= options.step_tol) {
      res.converged = true;
      return res;
    }

    const auto loglik_at = [&](double t) {
      return partial_loglik_eta(s, x * (res.beta_hat + t * dir));
    };
    double t = 1.0;
    double best = loglik_at(t);
    const double floor = cur.loglik - 1e-14 * std::max(1.0, std::abs(cur.loglik));
    int halvings = 0;
    while (!(best >= floor) && halvings < 50) {
      t *= 0.5;
      best = loglik_at(t);
      ++halvings;
    }
    if (!(best >= floor)) break;  // no ascent possible in floating point
    if (halvings == 0) {
      for (int k = 0; k < 40; ++k) {
        if ((res.beta_hat + 2.0 * t * dir).norm() >= 10.0 * limit) break;
        const double doubled = loglik_at(2.0 * t);
        if (!(doubled > best)) break;
        best = doubled;
        t *= 2.0;
      }
    }
    res.beta_hat += t * dir;
    if (res.beta_hat.norm() >= limit) {
      res.diverged = true;
      res.loglik = best;
      res.iterations += 1;
      return res;
    }
    cur = score_and_information(s, x, res.beta_hat);
  }
  res.loglik = cur.loglik;
  res.grad_norm = cur.gradient.cwiseAbs().maxCoeff();
  return res;
}

Eigen::VectorXd fisher_std(const SortedCohort& s, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  const ScoreInformation si = score_and_information(s, x, beta);
  const Eigen::MatrixXd scaled = static_cast<double>(s.n()) * si.info;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
  if (is_singular(ldlt, diag_scale(scaled))) throw SingularInformationError("fisher_std: singular information matrix");
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
  return inv.diagonal().cwiseMax(0.0).cwiseSqrt();
}

LrtResult lrt_stat(const SortedCohort& s, const Eigen::MatrixXd& x, Eigen::Index j,
                   const FitOptions& options, const FitResult* full) {
  const Eigen::Index p = x.cols();
  if (j < 0 || j >= p) throw std::out_of_range("lrt_stat: coordinate out of range");
  FitResult own;
  if (full == nullptr) {
    own = fit_mple(s, x, {}, options);
    full = &own;
  }
  LrtResult out;
  double restricted_loglik = 0.0;
  if (p == 1) {
    restricted_loglik = partial_loglik_eta(s, Eigen::VectorXd::Zero(s.n()));
  } else {
    Eigen::MatrixXd reduced(x.rows(), p - 1);
    reduced.leftCols(j) = x.leftCols(j);
    reduced.rightCols(p - 1 - j) = x.rightCols(p - 1 - j);
    Eigen::VectorXd start(p - 1);
    start.head(j) = full->beta_hat.head(j);
    start.tail(p - 1 - j) = full->beta_hat.tail(p - 1 - j);
    if (full->diverged) start.setZero();
    const FitResult restricted = fit_mple(s, reduced, start, options);
    if (restricted.diverged || !restricted.converged) out.diverged = true;
    restricted_loglik = restricted.loglik;
  }
  if (full->diverged || !full->converged) out.diverged = true;
  if (out.diverged) {
    out.statistic = std::numeric_limits<double>::quiet_NaN();
    out.p_value = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double n = static_cast<double>(s.n());
  out.statistic = std::max(0.0, 2.0 * n * (full->loglik - restricted_loglik));
  out.p_value = chi_square_sf(out.statistic, 1);
  return out;
}

}  // namespace coxht
