#include <doctest.h>

#include <cmath>

#include "coxht/inference.hpp"
#include "coxht/numcore/rng.hpp"
#include "oracles.hpp"

using namespace coxht;

TEST_CASE("corrected_pvalues: examples and scale invariance") {
  CHECK(corrected_pvalues(Eigen::VectorXd::Zero(1), 0.5)[0] == 1.0);
  const double want = 2.0 * (1.0 - oracle::phi_series(1.959964));
  const Eigen::VectorXd p = corrected_pvalues(Eigen::Vector2d(1.959964 * 0.3, -1.959964 * 0.3), 0.3);
  CHECK(p[0] == doctest::Approx(want).epsilon(1e-10));
  CHECK(p[1] == p[0]);
  CHECK(p[0] == doctest::Approx(0.05).epsilon(1e-5));
  RngStream rng(1, 0);
  for (int k = 0; k < 100; ++k) {
    const double beta = 3.0 * rng.normal(), b = rng.uniform(0.1, 2.0), c = rng.uniform(0.1, 10.0);
    const double p1 = corrected_pvalues(Eigen::VectorXd::Constant(1, beta), b)[0];
    const double p2 = corrected_pvalues(Eigen::VectorXd::Constant(1, c * beta), c * b)[0];
    CHECK(p1 == doctest::Approx(p2).epsilon(1e-13));
    CHECK(p1 >= 0.0);
    CHECK(p1 <= 1.0);
  }
  CHECK_THROWS_AS(corrected_pvalues(Eigen::VectorXd::Zero(1), 0.0), std::invalid_argument);
}

TEST_CASE("wald_chi2: closed forms and the one-coordinate identity") {
  const TestReport zero = wald_chi2(Eigen::VectorXd::Zero(3), 0.7);
  CHECK(zero.statistic == 0.0);
  CHECK(zero.p_value == 1.0);
  CHECK(zero.dof == 3);
  CHECK(zero.kind == TestKind::corrected_chi2);

  const double s = std::sqrt(2.0 * std::log(2.0));
  CHECK(wald_chi2(Eigen::Vector2d(s, 0.0), 1.0).p_value == doctest::Approx(0.5).epsilon(1e-13));

  RngStream rng(2, 0);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, 2.5 * rng.normal());
    const double b = rng.uniform(0.2, 2.0);
    CHECK(wald_chi2(beta, b).p_value == doctest::Approx(corrected_pvalues(beta, b)[0]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(wald_chi2(Eigen::VectorXd(), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(wald_chi2(Eigen::VectorXd::Ones(2), -1.0), std::invalid_argument);
}

TEST_CASE("classical_pvalues: per-coordinate scaling") {
  const Eigen::VectorXd p = classical_pvalues(Eigen::Vector2d(1.959964, 0.0), Eigen::Vector2d(1.0, 3.0));
  CHECK(p[0] == doctest::Approx(0.05).epsilon(1e-5));
  CHECK(p[1] == 1.0);
  CHECK_THROWS_AS(classical_pvalues(Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 0)), std::invalid_argument);
}

TEST_CASE("empirical_ab: decompositions and least-squares optimality") {
  const Eigen::VectorXd beta = Eigen::Vector4d(1.0, -2.0, 0.5, 3.0);
  AbEstimate e = empirical_ab(beta, beta);
  CHECK(e.a_hat == doctest::Approx(1.0));
  CHECK(e.b_hat == doctest::Approx(0.0));

  const Eigen::VectorXd perp = Eigen::Vector4d(2.0, 1.0, 0.0, 0.0);
  e = empirical_ab(perp, beta);
  CHECK(e.a_hat == doctest::Approx(0.0));
  CHECK(e.b_hat == doctest::Approx(perp.norm() / 2.0));

  e = empirical_ab(2.0 * beta + beta.norm() * perp.normalized(), beta);
  CHECK(e.a_hat == doctest::Approx(2.0));
  CHECK(e.b_hat == doctest::Approx(beta.norm() / 2.0));

  RngStream rng(3, 0);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd t = normal_sample(rng, 10);
    const Eigen::VectorXd h = 1.3 * t + normal_sample(rng, 10);
    const AbEstimate ab = empirical_ab(h, t);
    for (int g = -200; g <= 200; ++g) {
      const double a = ab.a_hat + g * 0.01;
      CHECK((h - ab.a_hat * t).norm() <= (h - a * t).norm() + 1e-12);
    }
  }
  CHECK_THROWS_AS(empirical_ab(beta, Eigen::VectorXd::Zero(4)), std::invalid_argument);
}

TEST_CASE("ks_uniform_stat: examples") {
  CHECK(ks_uniform_stat({0.5}) == doctest::Approx(0.5));
  CHECK(ks_uniform_stat({0.75, 0.25, 0.5}) == doctest::Approx(0.25));
  std::vector<double> grid;
  for (int i = 1; i <= 40; ++i) grid.push_back((i - 0.5) / 40.0);
  CHECK(ks_uniform_stat(grid) == doctest::Approx(0.5 / 40.0));
  CHECK_THROWS_AS(ks_uniform_stat({}), std::invalid_argument);
  CHECK_THROWS_AS(ks_uniform_stat({1.2}), std::invalid_argument);

  RngStream rng(4, 0);
  std::vector<double> u;
  for (int i = 0; i < 4000; ++i) u.push_back(rng.uniform());
  CHECK(ks_uniform_stat(u) < 1.63 / std::sqrt(4000.0));
}
