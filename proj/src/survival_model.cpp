#include "coxht/survival_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace coxht {

BetaScheme parse_beta_scheme(const std::string& name) {
  if (name == "phase") return BetaScheme::phase;
  if (name == "half_sparse") return BetaScheme::half_sparse;
  throw std::invalid_argument("unknown beta scheme '" + name + "'");
}

std::string to_string(BetaScheme scheme) {
  return scheme == BetaScheme::phase ? "phase" : "half_sparse";
}

void ModelConfig::validate() const {
  if (n < 1) throw std::invalid_argument("model: n must be positive");
  if (p < 1) throw std::invalid_argument("model: p must be positive");
  if (!(kappa >= 0.0)) throw std::invalid_argument("model: kappa must be non-negative");
  if (!(baseline_rate > 0.0)) throw std::invalid_argument("model: baseline_rate must be positive");
  if (!(censor_lo > 0.0) || !(censor_lo <= censor_hi))
    throw std::invalid_argument("model: need 0 < censor_lo <= censor_hi");
}

Eigen::MatrixXd SortedCohort::permute_rows(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < n(); ++i) out.row(i) = x.row(order[i]);
  return out;
}

Eigen::VectorXd SortedCohort::permute(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < n(); ++i) out[i] = v[order[i]];
  return out;
}

Eigen::VectorXd gen_beta(const ModelConfig& config, RngStream& stream) {
  const double k = config.kappa;
  const double second_moment = 1.0 / 3.0 + k * k;  // E[U^2], U ~ U[k-1, k+1]
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(config.p);
  Eigen::Index active = config.p;
  double scale = std::sqrt(k * k / second_moment);
  if (config.beta_scheme == BetaScheme::half_sparse) {
    active = (config.p + 1) / 2;
    scale = std::sqrt(2.0 * k * k / second_moment);
  }
  for (Eigen::Index j = 0; j < active; ++j) beta[j] = scale * stream.uniform(k - 1.0, k + 1.0);
  if (config.renormalize_beta) {
    const double norm = beta.norm();
    if (norm > 0.0) beta *= k * std::sqrt(static_cast<double>(config.p)) / norm;
  }
  return beta;
}

double survival_time(double u, double eta, double baseline_rate) {
  return -std::log(u) / (baseline_rate * std::exp(eta));
}

Cohort generate_cohort(const ModelConfig& config, const Eigen::VectorXd& beta, RngStream& stream) {
  config.validate();
  if (beta.size() != config.p) throw std::invalid_argument("generate_cohort: beta has wrong length");
  const Eigen::Index n = config.n;
  const Eigen::Index p = config.p;
  const double sd = 1.0 / std::sqrt(static_cast<double>(p));

  Cohort c;
  c.x.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) c.x(i, j) = sd * stream.normal();
  const Eigen::VectorXd eta = c.x * beta;
  c.survival.resize(n);
  c.censoring.resize(n);
  c.y.resize(n);
  c.delta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c.survival[i] = survival_time(stream.uniform(), eta[i], config.baseline_rate);
    c.censoring[i] = stream.uniform(config.censor_lo, config.censor_hi);
    c.y[i] = std::min(c.survival[i], c.censoring[i]);
    c.delta[i] = c.survival[i] <= c.censoring[i] ? 1 : 0;
  }
  return c;
}

Cohort make_cohort(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::VectorXi delta) {
  if (x.rows() != y.size() || y.size() != delta.size())
    throw std::invalid_argument("make_cohort: row counts disagree");
  for (Eigen::Index i = 0; i < delta.size(); ++i)
    if (delta[i] != 0 && delta[i] != 1) throw std::invalid_argument("make_cohort: Delta must be 0 or 1");
  Cohort c;
  c.x = std::move(x);
  c.y = std::move(y);
  c.delta = std::move(delta);
  return c;
}

SortedCohort sort_cohort(const Eigen::VectorXd& y, const Eigen::VectorXi& delta) {
  if (y.size() != delta.size()) throw std::invalid_argument("sort_cohort: size mismatch");
  const Eigen::Index n = y.size();
  SortedCohort s;
  s.order.resize(n);
  std::iota(s.order.begin(), s.order.end(), Eigen::Index{0});
  std::stable_sort(s.order.begin(), s.order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (y[a] != y[b]) return y[a] > y[b];
    return delta[a] < delta[b];  // censored first within a tie
  });
  s.y.resize(n);
  s.delta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.y[i] = y[s.order[i]];
    s.delta[i] = delta[s.order[i]];
  }

  s.rho.resize(n);
  for (Eigen::Index i = n - 1; i >= 0; --i)
    s.rho[i] = (i + 1 < n && s.y[i + 1] == s.y[i]) ? s.rho[i + 1] : i;

  s.next_event.assign(n, -1);
  Eigen::Index next = -1;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    s.next_event[i] = next;
    if (s.delta[i] == 1) next = i;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (s.delta[i] == 1) s.events.push_back(i);

  for (std::size_t k = 0; k < s.events.size();) {
    std::size_t end = k + 1;
    while (end < s.events.size() && s.y[s.events[end]] == s.y[s.events[k]]) ++end;
    if (end - k >= 2) s.tie_groups.emplace_back(s.events.begin() + k, s.events.begin() + end);
    k = end;
  }
  return s;
}

ReducedCohort reduce_to_1d(const ModelConfig& config, Eigen::Index n, RngStream& stream) {
  if (!(config.kappa >= 0.0)) throw std::invalid_argument("reduce_to_1d: kappa must be non-negative");
  Eigen::VectorXd q(n), y(n);
  Eigen::VectorXi delta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    q[i] = stream.normal();
    const double t = survival_time(stream.uniform(), config.kappa * q[i], config.baseline_rate);
    const double c = stream.uniform(config.censor_lo, config.censor_hi);
    y[i] = std::min(t, c);
    delta[i] = t <= c ? 1 : 0;
  }
  ReducedCohort r;
  r.sorted = sort_cohort(y, delta);
  r.q = r.sorted.permute(q);
  r.kappa = config.kappa;
  return r;
}

std::vector<Eigen::Index> null_coordinates(const Eigen::VectorXd& beta) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (beta[j] == 0.0) out.push_back(j);
  return out;
}

}  // namespace coxht
