#include <doctest.h>

#include <cmath>

#include "coxht/boundary.hpp"
#include "coxht/numcore/rng.hpp"
#include "oracles.hpp"

using namespace coxht;

namespace {

SortedCohort in_order(const Eigen::VectorXi& delta) {
  Eigen::VectorXd y(delta.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = static_cast<double>(y.size() - i);
  return sort_cohort(y, delta);
}

SortedCohort random_sorted(RngStream& rng, int n, bool ties) {
  Eigen::VectorXd y(n);
  Eigen::VectorXi d(n);
  for (int i = 0; i < n; ++i) {
    y[i] = ties ? std::floor(rng.uniform() * n / 2.0) : rng.uniform();
    d[i] = rng.uniform() < 0.6;
  }
  return sort_cohort(y, d);
}

Eigen::MatrixXd inequality_rows(const ConeM& cone) {
  const HalfspaceSet& hs = cone.halfspaces;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(hs.rows().size()), hs.dimension());
  for (std::size_t r = 0; r < hs.rows().size(); ++r)
    for (std::size_t k = 0; k < hs.rows()[r].index.size(); ++k)
      a(static_cast<Eigen::Index>(r), hs.rows()[r].index[k]) = hs.rows()[r].value[k];
  return a;
}

Eigen::MatrixXd equality_rows(const ConeM& cone) {
  const auto& eqs = cone.halfspaces.equalities();
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(eqs.size()), cone.dimension());
  for (std::size_t r = 0; r < eqs.size(); ++r) {
    e(static_cast<Eigen::Index>(r), eqs[r].first) = 1.0;
    e(static_cast<Eigen::Index>(r), eqs[r].second) = -1.0;
  }
  return e;
}

// min over t of the oracle projection distance, by golden section
double oracle_qp(const ConeM& cone, const Eigen::VectorXd& q, const Eigen::VectorXd& h) {
  const Eigen::MatrixXd a = inequality_rows(cone);
  const Eigen::MatrixXd e = equality_rows(cone);
  const auto g = [&](double t) {
    const Eigen::VectorXd z = h - t * q;
    return (z - oracle::active_set_projection(z, a, e)).squaredNorm();
  };
  double lo = -1e4, hi = 1e4;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
  double f1 = g(x1), f2 = g(x2);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - r * (hi - lo);
      f1 = g(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + r * (hi - lo);
      f2 = g(x2);
    }
  }
  return std::min(f1, f2) / static_cast<double>(h.size());
}

}  // namespace

TEST_CASE("build_cone: documented examples") {
  ConeM cone = build_cone(in_order(Eigen::Vector3i(0, 1, 1)));
  REQUIRE(cone.halfspaces.rows().size() == 2);
  CHECK(cone.halfspaces.rows()[0].index == std::vector<Eigen::Index>{0, 1});
  CHECK(cone.halfspaces.rows()[0].value == std::vector<double>{1.0, -1.0});
  CHECK(cone.halfspaces.rows()[1].index == std::vector<Eigen::Index>{1, 2});

  cone = build_cone(in_order(Eigen::Vector3i(0, 0, 0)));
  CHECK(cone.halfspaces.rows().empty());
  CHECK(cone.halfspaces.equalities().empty());

  const SortedCohort tied = sort_cohort(Eigen::Vector3d(3, 2, 2), Eigen::Vector3i(1, 1, 1));
  cone = build_cone(tied);
  REQUIRE(cone.halfspaces.equalities().size() == 1);
  CHECK(cone.halfspaces.equalities()[0] == std::pair<Eigen::Index, Eigen::Index>{1, 2});
  CHECK(cone.nodes.size() == 2);

  RngStream rng(1, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const SortedCohort s = random_sorted(rng, 2 + trial, trial % 2 == 0);
    CHECK(static_cast<Eigen::Index>(build_cone(s).halfspaces.rows().size()) <= s.n() - 1);
  }
}

TEST_CASE("project_cone: agrees with the active-set oracle and with Dykstra") {
  RngStream rng(2, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 6;
    const SortedCohort s = random_sorted(rng, n, trial % 3 == 0);
    const ConeM cone = build_cone(s);
    const Eigen::VectorXd z = normal_sample(rng, n);
    const Eigen::VectorXd exact = project_cone(cone, z);
    const Eigen::VectorXd want = oracle::active_set_projection(z, inequality_rows(cone), equality_rows(cone));
    CHECK((exact - want).cwiseAbs().maxCoeff() <= 1e-10);
    DykstraOptions opts;
    opts.tol = 1e-12;
    const DykstraResult d = dykstra_project(z, cone.halfspaces, opts);
    CHECK((d.projection - want).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("project_cone: Moreau decomposition on larger cohorts") {
  RngStream rng(3, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 10 + trial;
    const SortedCohort s = random_sorted(rng, n, trial % 4 == 0);
    const ConeM cone = build_cone(s);
    const Eigen::VectorXd z = normal_sample(rng, n);
    const Eigen::VectorXd m = project_cone(cone, z);
    const Eigen::VectorXd r = z - m;
    CHECK(cone.halfspaces.max_violation(m) <= 1e-12);
    CHECK(std::abs(r.dot(m)) <= 1e-9 * (1.0 + z.squaredNorm()));
    // the residual lies in the polar cone: <r, v> <= 0 for feasible v
    for (int k = 0; k < 5; ++k) {
      const Eigen::VectorXd v = project_cone(cone, normal_sample(rng, n));
      CHECK(r.dot(v) <= 1e-9 * (1.0 + v.norm() * r.norm()));
    }
    if (trial % 20 == 0) {
      DykstraOptions opts;
      opts.tol = 1e-12;
      opts.max_iter = 500000;
      const DykstraResult d = dykstra_project(z, cone.halfspaces, opts);
      CHECK((d.projection - m).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("qp_value: trivial cases") {
  const SortedCohort none = in_order(Eigen::Vector4i(0, 0, 0, 0));
  const ConeM free_cone = build_cone(none);
  RngStream rng(4, 0);
  const Eigen::VectorXd h = normal_sample(rng, 4);
  const Eigen::VectorXd q = normal_sample(rng, 4);
  CHECK(qp_value(free_cone, q, h).value == doctest::Approx(0.0));

  const ConeM single = build_cone(in_order(Eigen::VectorXi::Ones(1)));
  CHECK(qp_value(single, Eigen::VectorXd::Constant(1, 0.7), Eigen::VectorXd::Constant(1, -1.3)).value ==
        doctest::Approx(0.0));
}

TEST_CASE("qp_value: agrees with the oracle on small instances") {
  RngStream rng(5, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 5;
    const SortedCohort s = random_sorted(rng, n, trial % 3 == 0);
    const ConeM cone = build_cone(s);
    const Eigen::VectorXd q = normal_sample(rng, n);
    const Eigen::VectorXd h = normal_sample(rng, n);
    const QpResult res = qp_value(cone, q, h);
    CHECK(std::abs(res.value - oracle_qp(cone, q, h)) <= 1e-6);
    if (trial % 10 == 0) {
      const QpResult dyk = qp_value(cone, q, h, 1e-12, ProjectionMethod::dykstra);
      CHECK(std::abs(dyk.value - res.value) <= 1e-6);
    }
  }
}

TEST_CASE("qp_value: optimality conditions and invariances") {
  ModelConfig cfg;
  RngStream rng(6, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const ReducedCohort red = reduce_to_1d(cfg, 200, rng);
    const Eigen::VectorXd h = normal_sample(rng, 200);
    const QpResult res = qp_value(red, h);
    const ConeM cone = build_cone(red);
    const Eigen::VectorXd resid = h - res.t * red.q - res.m;
    const double scale = 1e-6 * (1.0 + h.squaredNorm());
    CHECK(cone.halfspaces.max_violation(res.m) <= 1e-10);
    CHECK(std::abs(resid.dot(res.m)) <= scale);
    CHECK(std::abs(resid.dot(red.q)) <= scale);
    CHECK(res.value >= 0.0);
    CHECK(res.value <= h.squaredNorm() / 200.0 + 1e-12);

    const double c = rng.uniform(-3.0, 3.0);
    CHECK(qp_value(red, h + c * red.q).value == doctest::Approx(res.value).epsilon(1e-8));

    const Eigen::VectorXd h2 = normal_sample(rng, 200);
    const double mid = qp_value(red, 0.5 * (h + h2)).value;
    CHECK(mid <= 0.5 * (res.value + qp_value(red, h2).value) + 1e-9);
  }
}

TEST_CASE("estimate_h: determinism, worker independence and the small-n oracle") {
  ModelConfig cfg;
  const HEstimate a = estimate_h(cfg, 50, 20, 9);
  const HEstimate b = estimate_h(cfg, 50, 20, 9);
  const HEstimate c = estimate_h(cfg, 50, 20, 9, 4);
  CHECK(a.mean == b.mean);
  CHECK(a.stderr == b.stderr);
  CHECK(a.mean == c.mean);

  double sum = 0.0;
  for (int r = 0; r < 10; ++r) {
    RngStream s(11, r);
    const ReducedCohort red = reduce_to_1d(cfg, 6, s);
    const Eigen::VectorXd h = normal_sample(s, 6);
    sum += oracle_qp(build_cone(red), red.q, h);
  }
  CHECK(estimate_h(cfg, 6, 10, 11).mean == doctest::Approx(sum / 10.0).epsilon(1e-6));
}

TEST_CASE("boundary_curve: ordered output inside (0, 1) and censoring shift") {
  ModelConfig cfg;
  const std::vector<BoundaryPoint> curve = boundary_curve(cfg, {0.5, 1.0, 2.0}, 200, 40, 3);
  REQUIRE(curve.size() == 3);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    CHECK(curve[i].delta_hat > 0.0);
    CHECK(curve[i].delta_hat < 1.0);
    CHECK(curve[i].stderr > 0.0);
  }
  CHECK(curve[0].kappa == 0.5);
  CHECK(curve[2].kappa == 2.0);
  CHECK_THROWS_AS(boundary_curve(cfg, {1.0, 0.5}, 50, 2, 1), std::invalid_argument);

  ModelConfig tight = cfg;
  tight.censor_hi = 1.5;
  ModelConfig loose = cfg;
  loose.censor_hi = 8.0;
  CHECK(estimate_h(tight, 200, 60, 4).mean < estimate_h(loose, 200, 60, 4).mean);
}
