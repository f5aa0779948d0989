#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "coxht/errors.hpp"
#include "coxht/harness.hpp"

using namespace coxht;

namespace {

ExperimentConfig small(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  c.model.n = 120;
  c.delta_grid = {0.1, 0.3};
  c.kappa_grid = {1.0};
  c.reps = 6;
  c.seed = 42;
  c.qp_reps = 8;
  c.qp_n = 100;
  c.n_rep = 200;
  c.null_coords = 6;
  c.lrt_coords = 2;
  if (kind == ExperimentKind::null_dist || kind == ExperimentKind::classical_failure)
    c.model.beta_scheme = BetaScheme::half_sparse;
  return c;
}

std::string read(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config: parse, echo and reject") {
  const std::string text = R"({
    "experiment": "consistency",
    "model": {"n": 400, "kappa": 2, "censor_lo": 1, "censor_hi": 8, "beta_scheme": "half_sparse", "fix_beta": true},
    "grids": {"delta": [0.1, 0.2], "kappa": [1, 2]},
    "reps": 50, "seed": 12345678901, "out_dir": "runs/x", "workers": 3, "n_rep": 1500,
    "constants": "empirical", "chi2_groups": [3], "gnuplot": true
  })";
  const ExperimentConfig c = parse_experiment_config(text);
  CHECK(c.experiment == ExperimentKind::consistency);
  CHECK(c.model.n == 400);
  CHECK(c.model.censor_hi == 8.0);
  CHECK(c.model.beta_scheme == BetaScheme::half_sparse);
  CHECK(c.model.fix_beta);
  CHECK(c.delta_grid == std::vector<double>{0.1, 0.2});
  CHECK(c.kappa_grid == std::vector<double>{1.0, 2.0});
  CHECK(c.seed == 12345678901ULL);
  CHECK(c.out_dir == "runs/x");
  CHECK(c.workers == 3);
  CHECK(c.constants == "empirical");
  CHECK(c.chi2_groups == std::vector<int>{3});
  CHECK(c.gnuplot);
  CHECK_NOTHROW(c.validate());

  const ExperimentConfig again = parse_experiment_config(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));

  CHECK_THROWS_AS(parse_experiment_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("[1]"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"reps": "many"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"model": {"size": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"experiment": "figure9"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"grids": {"gamma": [1]}})"), ConfigError);

  ExperimentConfig bad = small(ExperimentKind::phase_diagram);
  bad.delta_grid.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small(ExperimentKind::phase_diagram);
  bad.reps = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small(ExperimentKind::phase_diagram);
  bad.delta_grid = {1.2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small(ExperimentKind::null_dist);
  bad.model.beta_scheme = BetaScheme::phase;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small(ExperimentKind::phase_diagram);
  bad.model.censor_hi = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(run_phase_diagram(bad), ConfigError);
}

TEST_CASE("columns_for rounds delta * n") {
  CHECK(columns_for(0.4, 300) == 120);
  CHECK(columns_for(0.1, 401) == 40);
  CHECK(columns_for(0.001, 100) == 1);
}

TEST_CASE("git_blob_hash matches git") {
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("every experiment is deterministic across worker counts") {
  for (ExperimentKind kind : {ExperimentKind::phase_diagram, ExperimentKind::consistency, ExperimentKind::null_dist,
                              ExperimentKind::classical_failure}) {
    ExperimentConfig c = small(kind);
    c.workers = 1;
    const std::vector<Artifact> one = run_experiment(c);
    c.workers = 3;
    const std::vector<Artifact> three = run_experiment(c);
    REQUIRE(one.size() == three.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
      CHECK(one[i].name == three[i].name);
      CHECK(one[i].content == three[i].content);
    }
    c.seed = 43;
    const std::vector<Artifact> other = run_experiment(c);
    bool differs = false;
    for (std::size_t i = 0; i < one.size(); ++i) differs = differs || one[i].content != other[i].content;
    CHECK(differs);
  }
}

TEST_CASE("phase diagram: columns and the two extreme regions") {
  ExperimentConfig c = small(ExperimentKind::phase_diagram);
  c.model.n = 200;
  c.delta_grid = {0.02, 0.95};
  c.reps = 100;
  c.qp_n = 200;
  c.qp_reps = 20;
  c.workers = 2;
  const PhaseDiagramResult r = run_phase_diagram(c);
  REQUIRE(r.cells.size() == 2);
  CHECK(r.cells[0].p == 4);
  CHECK(r.cells[0].exist_frac >= 0.99);
  CHECK(r.cells[1].p == 190);
  CHECK(r.cells[1].exist_frac <= 0.01);
  REQUIRE(r.artifacts.size() == 2);
  CHECK(r.artifacts[0].content.rfind("delta,kappa,exist_frac,reps", 0) == 0);
  CHECK(r.artifacts[1].content.rfind("kappa,delta_hat,stderr\n", 0) == 0);
  REQUIRE(r.boundary.size() == 1);
  CHECK(r.boundary[0].delta_hat > 0.6);
  CHECK(r.boundary[0].delta_hat < 1.0);
}

TEST_CASE("consistency, null and classical runs report their summaries") {
  const ConsistencyResult cons = run_consistency(small(ExperimentKind::consistency));
  REQUIRE(cons.cells.size() == 2);
  for (const ConsistencyCell& cell : cons.cells) {
    CHECK(cell.fits + cell.failed == 6);
    CHECK(cell.a_hat_mean > 0.5);
    CHECK(cell.solution.b_star > 0.0);
  }
  CHECK(cons.artifacts[0].content.rfind(
            "kappa,delta,a_hat_mean,a_hat_se,b_hat_mean,b_hat_se,a_star,b_star,solver_converged", 0) == 0);

  const NullDistributionResult nd = run_null_distribution(small(ExperimentKind::null_dist));
  REQUIRE(nd.cells.size() == 2);
  REQUIRE(nd.cells[0].families.size() == 4);
  CHECK(nd.cells[0].families[0].name == "corrected_z");
  CHECK(nd.cells[0].families[0].count == 6 * (6 - nd.cells[0].failed));
  CHECK(nd.cells[0].families[2].name == "chi2_l2");
  CHECK(nd.cells[0].families[2].count == 2 * 3 * (6 - nd.cells[0].failed));
  CHECK(nd.cells[0].families[3].count == 2 * 1 * (6 - nd.cells[0].failed));
  CHECK(nd.artifacts.size() == 3);

  const ClassicalFailureResult cf = run_classical_failure(small(ExperimentKind::classical_failure));
  REQUIRE(cf.cells.size() == 2);
  CHECK(cf.cells[0].lrt_count == 2 * (6 - cf.cells[0].failed));
  CHECK(cf.cells[0].ratio_mean > 0.0);
  CHECK(cf.cells[0].slope > 0.0);
}

TEST_CASE("write_artifacts: files, sidecars and gnuplot scripts") {
  ExperimentConfig c = small(ExperimentKind::phase_diagram);
  c.gnuplot = true;
  c.out_dir = (std::filesystem::temp_directory_path() / "coxht_test_harness").string();
  std::filesystem::remove_all(c.out_dir);
  const std::vector<Artifact> a = run_experiment(c);
  write_artifacts(c, a, 1.5);
  CHECK(std::filesystem::exists(std::filesystem::path(c.out_dir) / "phase_diagram.gp"));
  const std::string csv = read(std::filesystem::path(c.out_dir) / "boundary.csv");
  CHECK(csv == a[1].content);
  const std::string side = read(std::filesystem::path(c.out_dir) / "boundary.json");
  CHECK(side.find(git_blob_hash(csv)) != std::string::npos);
  CHECK(side.find(git_blob_hash(config_to_json(c))) != std::string::npos);
  CHECK(side.find("\"wall_time_s\": 1.5") != std::string::npos);
  std::filesystem::remove_all(c.out_dir);
}

TEST_CASE("classical failure: the low-dimensional control cell has calibrated Fisher std") {
  ExperimentConfig c = small(ExperimentKind::classical_failure);
  c.model.n = 400;
  c.delta_grid = {0.01};
  c.reps = 200;
  c.n_rep = 20000;
  const ClassicalFailureResult r = run_classical_failure(c);
  REQUIRE(r.cells.size() == 1);
  CHECK(r.cells[0].p == 4);
  CHECK(r.cells[0].ratio_mean >= 0.9);
  CHECK(r.cells[0].ratio_mean <= 1.1);
}
