#include <doctest.h>

#include <cmath>

#include "coxht/coxfit.hpp"
#include "coxht/errors.hpp"
#include "oracles.hpp"

using namespace coxht;

namespace {

struct Data {
  Cohort cohort;
  SortedCohort sorted;
  Eigen::MatrixXd xs;
};

Data simulate(int n, int p, double kappa, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.n = n;
  cfg.p = p;
  cfg.kappa = kappa;
  RngStream bs(seed, 0);
  const Eigen::VectorXd beta = gen_beta(cfg, bs);
  RngStream s(seed, 1);
  Data d;
  d.cohort = generate_cohort(cfg, beta, s);
  d.sorted = sort_cohort(d.cohort);
  d.xs = d.sorted.permute_rows(d.cohort.x);
  return d;
}

Data tied(int n, int p, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  Eigen::VectorXi delta(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
    y[i] = std::floor(rng.uniform() * 5.0);
    delta[i] = rng.uniform() < 0.7;
  }
  Data d;
  d.cohort = make_cohort(x, y, delta);
  d.sorted = sort_cohort(d.cohort);
  d.xs = d.sorted.permute_rows(x);
  return d;
}

}  // namespace

TEST_CASE("partial_loglik agrees with the definition, ties included") {
  for (int trial = 0; trial < 20; ++trial) {
    const Data d = trial % 2 ? simulate(40, 3, 1.0, trial) : tied(30, 2, trial);
    RngStream rng(500, trial);
    Eigen::VectorXd beta(d.xs.cols());
    for (Eigen::Index j = 0; j < beta.size(); ++j) beta[j] = rng.uniform(-2.0, 2.0);
    const double want = oracle::cox_loglik_brute(d.cohort.x, d.cohort.y, d.cohort.delta, beta);
    CHECK(partial_loglik(d.sorted, d.xs, beta) == doctest::Approx(want).epsilon(1e-12));
    CHECK(score_and_information(d.sorted, d.xs, beta).loglik == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("partial_loglik is stable for huge linear predictors") {
  const Data d = simulate(50, 2, 1.0, 3);
  const Eigen::VectorXd beta = Eigen::Vector2d(800.0, -600.0);
  const double value = partial_loglik(d.sorted, d.xs, beta);
  CHECK(std::isfinite(value));
  CHECK(value <= 0.0 + 1e-12 * 800);
  const ScoreInformation si = score_and_information(d.sorted, d.xs, beta);
  CHECK(si.gradient.allFinite());
  CHECK(si.info.allFinite());
}

TEST_CASE("score and information match finite differences of the oracle") {
  for (int trial = 0; trial < 6; ++trial) {
    const Data d = trial % 2 ? simulate(60, 4, 1.0, 40 + trial) : tied(40, 3, 40 + trial);
    const Eigen::Index p = d.xs.cols();
    RngStream rng(600, trial);
    Eigen::VectorXd beta(p);
    for (Eigen::Index j = 0; j < p; ++j) beta[j] = rng.uniform(-1.0, 1.0);
    const auto f = [&](const Eigen::VectorXd& b) {
      return oracle::cox_loglik_brute(d.cohort.x, d.cohort.y, d.cohort.delta, b);
    };
    const ScoreInformation si = score_and_information(d.sorted, d.xs, beta);
    const double h = 1e-4;
    for (Eigen::Index a = 0; a < p; ++a) {
      Eigen::VectorXd ea = Eigen::VectorXd::Zero(p);
      ea[a] = h;
      CHECK(si.gradient[a] == doctest::Approx((f(beta + ea) - f(beta - ea)) / (2 * h)).epsilon(1e-6));
      for (Eigen::Index b = 0; b < p; ++b) {
        Eigen::VectorXd eb = Eigen::VectorXd::Zero(p);
        eb[b] = h;
        const double hess =
            (f(beta + ea + eb) - f(beta + ea - eb) - f(beta - ea + eb) + f(beta - ea - eb)) / (4 * h * h);
        CHECK(std::abs(si.info(a, b) + hess) <= 1e-5 * (1.0 + std::abs(hess)));
      }
    }
    CHECK((si.info - si.info.transpose()).norm() == 0.0);
  }
}

TEST_CASE("fit_mple: one covariate agrees with a bisection on the score") {
  for (int trial = 0; trial < 5; ++trial) {
    const Data d = simulate(200, 1, 0.5, 70 + trial);
    const FitResult fit = fit_mple(d.sorted, d.xs);
    REQUIRE(fit.converged);
    const auto score = [&](double b) {
      const double h = 1e-6;
      return oracle::cox_loglik_brute(d.cohort.x, d.cohort.y, d.cohort.delta, Eigen::VectorXd::Constant(1, b + h)) -
             oracle::cox_loglik_brute(d.cohort.x, d.cohort.y, d.cohort.delta, Eigen::VectorXd::Constant(1, b - h));
    };
    const double root = oracle::bisect(score, -20.0, 20.0);
    CHECK(fit.beta_hat[0] == doctest::Approx(root).epsilon(1e-5));
  }
}

TEST_CASE("fit_mple: gradient vanishes at the estimate") {
  const Data d = simulate(300, 20, 1.0, 90);
  const FitResult fit = fit_mple(d.sorted, d.xs);
  CHECK(fit.converged);
  CHECK_FALSE(fit.diverged);
  CHECK(fit.grad_norm <= 1e-9);
  CHECK(score_and_information(d.sorted, d.xs, fit.beta_hat).gradient.cwiseAbs().maxCoeff() <= 1e-9);
  // local maximum: no random nearby point does better
  RngStream rng(91, 0);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd b = fit.beta_hat;
    for (Eigen::Index j = 0; j < b.size(); ++j) b[j] += 1e-3 * rng.normal();
    CHECK(partial_loglik(d.sorted, d.xs, b) <= fit.loglik);
  }
}

TEST_CASE("fit_mple: separable data diverges") {
  // larger covariate always fails first: the likelihood rises forever along +beta
  const int n = 30;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  Eigen::VectorXi delta = Eigen::VectorXi::Ones(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i;
    y[i] = n - i;
  }
  const Cohort c = make_cohort(x, y, delta);
  const SortedCohort s = sort_cohort(c);
  const FitResult fit = fit_mple(s, s.permute_rows(x));
  CHECK(fit.diverged);
  CHECK_FALSE(fit.converged);
  CHECK(fit.beta_hat[0] > 0.0);
}

TEST_CASE("fit_mple: singular starting information raises") {
  const Data d = simulate(50, 2, 1.0, 5);
  Eigen::MatrixXd x = d.xs;
  x.col(1) = x.col(0);
  CHECK_THROWS_AS(fit_mple(d.sorted, x), SingularInformationError);
  x.col(1).setConstant(3.0);
  CHECK_THROWS_AS(fit_mple(d.sorted, x), SingularInformationError);
  CHECK_THROWS_AS(fisher_std(d.sorted, x, Eigen::VectorXd::Zero(2)), SingularInformationError);
}

TEST_CASE("fisher_std: matches the inverse of n times the oracle Hessian") {
  const Data d = simulate(80, 3, 1.0, 12);
  const Eigen::VectorXd beta = Eigen::Vector3d(0.3, -0.2, 0.1);
  const auto f = [&](const Eigen::VectorXd& b) {
    return oracle::cox_loglik_brute(d.cohort.x, d.cohort.y, d.cohort.delta, b);
  };
  Eigen::Matrix3d hess;
  const double h = 1e-4;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      Eigen::Vector3d ea = Eigen::Vector3d::Zero(), eb = Eigen::Vector3d::Zero();
      ea[a] = h;
      eb[b] = h;
      hess(a, b) = (f(beta + ea + eb) - f(beta + ea - eb) - f(beta - ea + eb) + f(beta - ea - eb)) / (4 * h * h);
    }
  const Eigen::Matrix3d cov = (-80.0 * hess).inverse();
  const Eigen::VectorXd sd = fisher_std(d.sorted, d.xs, beta);
  for (int a = 0; a < 3; ++a) CHECK(sd[a] == doctest::Approx(std::sqrt(cov(a, a))).epsilon(1e-4));
}

TEST_CASE("lrt_stat: equals twice the log-likelihood gap of two fits") {
  const Data d = simulate(200, 4, 1.0, 21);
  const FitResult full = fit_mple(d.sorted, d.xs);
  Eigen::MatrixXd reduced(d.xs.rows(), 3);
  reduced << d.xs.col(0), d.xs.col(2), d.xs.col(3);
  const FitResult restricted = fit_mple(d.sorted, reduced);
  const LrtResult r = lrt_stat(d.sorted, d.xs, 1);
  CHECK_FALSE(r.diverged);
  CHECK(r.statistic == doctest::Approx(2.0 * 200 * (full.loglik - restricted.loglik)).epsilon(1e-8));
  CHECK(r.statistic >= 0.0);
  CHECK(r.p_value == doctest::Approx(std::erfc(std::sqrt(r.statistic / 2.0))).epsilon(1e-10));
  const LrtResult again = lrt_stat(d.sorted, d.xs, 1, {}, &full);
  CHECK(again.statistic == doctest::Approx(r.statistic).epsilon(1e-10));
  CHECK_THROWS_AS(lrt_stat(d.sorted, d.xs, 4), std::out_of_range);
}

TEST_CASE("lrt_stat: single covariate compares against beta = 0") {
  const Data d = simulate(150, 1, 1.0, 22);
  const FitResult full = fit_mple(d.sorted, d.xs);
  const double null_loglik = partial_loglik(d.sorted, d.xs, Eigen::VectorXd::Zero(1));
  CHECK(lrt_stat(d.sorted, d.xs, 0).statistic == doctest::Approx(300.0 * (full.loglik - null_loglik)));
}

namespace {

SortedCohort sorted_all(const Eigen::VectorXi& delta) {
  Eigen::VectorXd y(delta.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = static_cast<double>(y.size() - i);
  return sort_cohort(y, delta);
}

}  // namespace

TEST_CASE("hand cases for likelihood, score and Fisher std") {
  CHECK(partial_loglik_eta(sorted_all(Eigen::VectorXi::Ones(1)), Eigen::VectorXd::Constant(1, 2.7)) ==
        doctest::Approx(0.0).epsilon(1e-15));
  CHECK(partial_loglik_eta(sorted_all(Eigen::VectorXi::Zero(4)), Eigen::Vector4d(1, 2, 3, 4)) == 0.0);

  const SortedCohort s = sorted_all(Eigen::Vector2i(0, 1));
  CHECK(partial_loglik_eta(s, Eigen::Vector2d(0.0, std::log(3.0))) ==
        doctest::Approx(0.5 * (std::log(3.0) - std::log(2.0))).epsilon(1e-14));
  CHECK(partial_loglik_eta(s, Eigen::Vector2d(0.0, std::log(3.0))) == doctest::Approx(0.202733).epsilon(1e-6));

  const Eigen::MatrixXd x = Eigen::Vector2d(0.0, 1.0);
  const ScoreInformation si = score_and_information(s, x, Eigen::VectorXd::Zero(1));
  CHECK(si.gradient[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(si.info(0, 0) == doctest::Approx(0.125).epsilon(1e-15));  // (1/2) * Var{0, 1}
  CHECK(fisher_std(s, x, Eigen::VectorXd::Zero(1))[0] == doctest::Approx(2.0).epsilon(1e-14));

  // a column identical across subjects carries no information
  const Eigen::MatrixXd xc = Eigen::Vector2d(1.5, 1.5);
  CHECK(score_and_information(s, xc, Eigen::VectorXd::Zero(1)).info(0, 0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(fit_mple(s, xc), SingularInformationError);
}

TEST_CASE("exchangeable duplicated block gives equal standard deviations") {
  const Data d = simulate(100, 1, 1.0, 31);
  Eigen::MatrixXd x(100, 2);
  x.col(0) = d.xs.col(0);
  x.col(1) = -d.xs.col(0).reverse();
  Eigen::MatrixXd swapped(100, 2);
  swapped << x.col(1), x.col(0);
  const Eigen::VectorXd a = fisher_std(d.sorted, x, Eigen::Vector2d(0.2, 0.2));
  const Eigen::VectorXd b = fisher_std(d.sorted, swapped, Eigen::Vector2d(0.2, 0.2));
  CHECK(a[0] == doctest::Approx(b[1]).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(b[0]).epsilon(1e-12));
}

TEST_CASE("fit_mple: three-point example where the constraints conflict") {
  const SortedCohort s = sorted_all(Eigen::Vector3i(1, 1, 1));
  const Eigen::MatrixXd x = Eigen::Vector3d(0.0, 1.0, 0.5);
  const FitResult fit = fit_mple(s, x);
  REQUIRE(fit.converged);
  const auto score = [&](double b) {
    return score_and_information(s, x, Eigen::VectorXd::Constant(1, b)).gradient[0];
  };
  CHECK(fit.beta_hat[0] == doctest::Approx(oracle::bisect(score, -50.0, 50.0)).epsilon(1e-9));

  // LRT against a dense grid maximization of the oracle likelihood
  Eigen::VectorXd y(3);
  y << 3, 2, 1;
  const Eigen::VectorXi delta = Eigen::Vector3i(1, 1, 1);
  double best = -1e300, arg = 0.0;
  for (int k = -200000; k <= 200000; ++k) {
    const double b = k * 1e-4;
    const double v = oracle::cox_loglik_brute(x, y, delta, Eigen::VectorXd::Constant(1, b));
    if (v > best) {
      best = v;
      arg = b;
    }
  }
  const double grid_lrt = 6.0 * (best - oracle::cox_loglik_brute(x, y, delta, Eigen::VectorXd::Zero(1)));
  CHECK(lrt_stat(s, x, 0).statistic == doctest::Approx(grid_lrt).epsilon(1e-5));
  CHECK(std::abs(fit.beta_hat[0] - arg) <= 1e-4);
}

TEST_CASE("partial likelihood is concave along random segments") {
  const Data d = simulate(60, 5, 1.0, 33);
  RngStream rng(34, 0);
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd b1(5), b2(5);
    for (int j = 0; j < 5; ++j) {
      b1[j] = rng.uniform(-3.0, 3.0);
      b2[j] = rng.uniform(-3.0, 3.0);
    }
    const double mid = partial_loglik(d.sorted, d.xs, 0.5 * (b1 + b2));
    const double chord = 0.5 * (partial_loglik(d.sorted, d.xs, b1) + partial_loglik(d.sorted, d.xs, b2));
    CHECK(mid >= chord - 1e-12);
  }
}

TEST_CASE("within-tie input permutation leaves the fit unchanged") {
  const Data d = tied(60, 2, 35);
  // reverse the input order: tied rows land in a different relative order
  const Eigen::Index n = d.cohort.n();
  const Cohort rev = make_cohort(d.cohort.x.colwise().reverse(), d.cohort.y.reverse(), d.cohort.delta.reverse());
  const SortedCohort rs = sort_cohort(rev);
  const Eigen::MatrixXd rx = rs.permute_rows(rev.x);
  const Eigen::Vector2d beta(0.4, -0.3);
  CHECK(partial_loglik(rs, rx, beta) == doctest::Approx(partial_loglik(d.sorted, d.xs, beta)).epsilon(1e-13));
  const FitResult a = fit_mple(d.sorted, d.xs);
  const FitResult b = fit_mple(rs, rx);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK((a.beta_hat - b.beta_hat).norm() <= 1e-8);
  CHECK(n == 60);
}
