#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coxht/boundary.hpp"
#include "coxht/coxfit.hpp"
#include "coxht/errors.hpp"
#include "coxht/existence.hpp"
#include "coxht/harness.hpp"
#include "coxht/numcore/parallel.hpp"
#include "coxht/numcore/rng.hpp"
#include "coxht/state_eq.hpp"

using namespace coxht;
using nlohmann::json;

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw ConfigError("cannot write " + path);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number '" + s + "' in " + what);
  }
}

std::pair<double, double> parse_censor(const std::string& text) {
  const std::vector<std::string> parts = split(text, ',');
  if (parts.size() != 2) throw ConfigError("--censor expects lo,hi");
  return {to_double(parts[0], "--censor"), to_double(parts[1], "--censor")};
}

// CSV with header y,delta,x1,...,xp
Cohort read_cohort(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  const std::vector<std::string> header = split(line, ',');
  if (header.size() < 2 || header[0] != "y" || header[1] != "delta")
    throw ConfigError(path + ": header must start with y,delta");
  const std::size_t p = header.size() - 2;
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != header.size()) throw ConfigError(path + ": line " + std::to_string(lineno) + " has wrong width");
    std::vector<double> v;
    for (const std::string& c : cells) v.push_back(to_double(c, path + " line " + std::to_string(lineno)));
    rows.push_back(std::move(v));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  if (n == 0) throw ConfigError(path + ": no observations");
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(p));
  Eigen::VectorXd y(n);
  Eigen::VectorXi d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = rows[i][0];
    if (rows[i][1] != 0.0 && rows[i][1] != 1.0) throw ConfigError(path + ": delta must be 0 or 1");
    d[i] = static_cast<int>(rows[i][1]);
    for (std::size_t j = 0; j < p; ++j) x(i, static_cast<Eigen::Index>(j)) = rows[i][j + 2];
  }
  try {
    return make_cohort(std::move(x), std::move(y), std::move(d));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_file(out, j.dump(2) + "\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coxht: high-dimensional Cox regression toolkit"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "simulate a cohort and its true coefficients");
  std::string gen_config;
  std::uint64_t gen_seed = 1;
  std::string gen_out = ".";
  int gen_n = 0, gen_p = 0;
  double gen_kappa = -1.0;
  gen->add_option("--config", gen_config, "JSON config; its \"model\" object is used");
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", gen_out, "output directory (cohort.csv, beta.csv)");
  gen->add_option("--n", gen_n, "override model.n");
  gen->add_option("--p", gen_p, "override model.p");
  gen->add_option("--kappa", gen_kappa, "override model.kappa");

  // fit
  auto* fit = app.add_subcommand("fit", "maximum partial likelihood fit");
  std::string fit_data, fit_out;
  bool fit_std = false;
  fit->add_option("--data", fit_data, "cohort CSV (y,delta,x1..xp)")->required();
  fit->add_flag("--fisher-std", fit_std, "also report Fisher standard errors at the estimate");
  fit->add_option("--out", fit_out, "write JSON here instead of stdout");

  // exists
  auto* ex = app.add_subcommand("exists", "decide whether the MPLE exists");
  std::string ex_data, ex_out;
  ex->add_option("--data", ex_data, "cohort CSV (y,delta,x1..xp)")->required();
  ex->add_option("--out", ex_out, "write JSON here instead of stdout");

  // boundary
  auto* bd = app.add_subcommand("boundary", "Monte Carlo phase-transition curve");
  std::vector<double> bd_kappa{1.0};
  double bd_lambda = 1.0;
  std::string bd_censor = "1,2", bd_out;
  int bd_n = 1000, bd_reps = 500, bd_workers = 0;
  std::uint64_t bd_seed = 1;
  bd->add_option("--kappa", bd_kappa, "increasing kappa grid")->delimiter(',');
  bd->add_option("--lambda", bd_lambda, "baseline hazard rate");
  bd->add_option("--censor", bd_censor, "uniform censoring range lo,hi");
  bd->add_option("--n", bd_n, "sample size of each replication");
  bd->add_option("--reps", bd_reps, "replications");
  bd->add_option("--seed", bd_seed, "random seed");
  bd->add_option("--workers", bd_workers, "worker threads (0: all)");
  bd->add_option("--out", bd_out, "write CSV here instead of stdout");

  // solve-state
  auto* ss = app.add_subcommand("solve-state", "solve the state equations for (a*, b*, r*)");
  double ss_kappa = 1.0, ss_delta = 0.1, ss_lambda = 1.0;
  std::string ss_censor = "1,2", ss_constants = "population", ss_out;
  int ss_nrep = 200000, ss_coarse = 2000;
  std::uint64_t ss_seed = 1;
  ss->add_option("--kappa", ss_kappa, "signal strength");
  ss->add_option("--delta", ss_delta, "aspect ratio p/n");
  ss->add_option("--lambda", ss_lambda, "baseline hazard rate");
  ss->add_option("--censor", ss_censor, "uniform censoring range lo,hi");
  ss->add_option("--nrep", ss_nrep, "size of the representative sample");
  ss->add_option("--coarse-nrep", ss_coarse, "sample size of the nested starting solve");
  ss->add_option("--seed", ss_seed, "random seed");
  ss->add_option("--constants", ss_constants, "population or empirical");
  ss->add_option("--out", ss_out, "write JSON here instead of stdout");

  // experiment
  auto* exp = app.add_subcommand("experiment", "run a configured experiment");
  std::string exp_name, exp_config, exp_out;
  std::uint64_t exp_seed = 0;
  int exp_workers = -1;
  bool exp_gnuplot = false;
  exp->add_option("name", exp_name, "phase_diagram | consistency | null_dist | classical_failure")->required();
  exp->add_option("--config", exp_config, "JSON config file")->required();
  auto* seed_opt = exp->add_option("--seed", exp_seed, "override seed");
  exp->add_option("--out", exp_out, "override out_dir");
  exp->add_option("--workers", exp_workers, "worker threads (0: all)");
  exp->add_flag("--gnuplot", exp_gnuplot, "also write gnuplot scripts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*gen) {
      ExperimentConfig cfg;
      if (!gen_config.empty()) {
        cfg = parse_experiment_config(read_file(gen_config));
      }
      ModelConfig m = cfg.model;
      if (gen_n > 0) m.n = gen_n;
      if (gen_p > 0) m.p = gen_p;
      if (gen_kappa >= 0.0) m.kappa = gen_kappa;
      try {
        m.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model: ") + e.what());
      }
      RngStream stream(gen_seed, 0);
      const Eigen::VectorXd beta = gen_beta(m, stream);
      const Cohort c = generate_cohort(m, beta, stream);
      std::ostringstream cohort;
      cohort << "y,delta";
      for (int j = 1; j <= m.p; ++j) cohort << ",x" << j;
      cohort << "\n";
      for (Eigen::Index i = 0; i < c.n(); ++i) {
        cohort << fmt(c.y[i]) << "," << c.delta[i];
        for (Eigen::Index j = 0; j < c.p(); ++j) cohort << "," << fmt(c.x(i, j));
        cohort << "\n";
      }
      std::ostringstream b;
      b << "j,beta\n";
      for (Eigen::Index j = 0; j < beta.size(); ++j) b << j + 1 << "," << fmt(beta[j]) << "\n";
      std::filesystem::create_directories(gen_out);
      write_file((std::filesystem::path(gen_out) / "cohort.csv").string(), cohort.str());
      write_file((std::filesystem::path(gen_out) / "beta.csv").string(), b.str());
      return 0;
    }
    if (*fit) {
      const Cohort c = read_cohort(fit_data);
      const SortedCohort s = sort_cohort(c);
      const Eigen::MatrixXd xs = s.permute_rows(c.x);
      const FitResult f = fit_mple(s, xs);
      json j;
      j["beta_hat"] = to_vector(f.beta_hat);
      j["loglik"] = f.loglik;
      j["grad_norm"] = f.grad_norm;
      j["iterations"] = f.iterations;
      j["converged"] = f.converged;
      j["diverged"] = f.diverged;
      if (fit_std && f.converged && !f.diverged) j["fisher_std"] = to_vector(fisher_std(s, xs, f.beta_hat));
      emit(j, fit_out);
      return 0;
    }
    if (*ex) {
      const Cohort c = read_cohort(ex_data);
      const SortedCohort s = sort_cohort(c);
      const ExistenceReport r = check_existence(s, s.permute_rows(c.x));
      json j;
      j["exists"] = r.exists;
      j["lp_value"] = r.lp_value;
      j["rows"] = r.rows;
      j["rank"] = r.rank;
      j["full_rank"] = r.full_rank;
      emit(j, ex_out);
      return 0;
    }
    if (*bd) {
      ModelConfig m;
      m.baseline_rate = bd_lambda;
      std::tie(m.censor_lo, m.censor_hi) = parse_censor(bd_censor);
      try {
        m.p = 1;
        m.n = bd_n;
        m.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model: ") + e.what());
      }
      std::vector<BoundaryPoint> curve;
      try {
        curve = boundary_curve(m, bd_kappa, bd_n, bd_reps, bd_seed, bd_workers > 0 ? bd_workers : default_workers());
      } catch (const NumericalError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      std::ostringstream out;
      out << "kappa,delta_hat,stderr\n";
      for (const BoundaryPoint& b : curve) out << fmt(b.kappa) << "," << fmt(b.delta_hat) << "," << fmt(b.stderr) << "\n";
      if (bd_out.empty())
        std::cout << out.str();
      else
        write_file(bd_out, out.str());
      return 0;
    }
    if (*ss) {
      if (!(ss_delta > 0.0 && ss_delta < 1.0)) throw ConfigError("--delta must lie in (0, 1)");
      if (!(ss_kappa > 0.0)) throw ConfigError("--kappa must be positive");
      if (ss_constants != "population" && ss_constants != "empirical")
        throw ConfigError("--constants must be population or empirical");
      if (ss_nrep < 10 || ss_coarse < 10) throw ConfigError("--nrep and --coarse-nrep must be >= 10");
      ExperimentConfig cfg;
      cfg.model.kappa = ss_kappa;
      cfg.model.baseline_rate = ss_lambda;
      std::tie(cfg.model.censor_lo, cfg.model.censor_hi) = parse_censor(ss_censor);
      try {
        cfg.model.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model: ") + e.what());
      }
      cfg.n_rep = ss_nrep;
      cfg.coarse_n_rep = ss_coarse;
      cfg.seed = ss_seed;
      cfg.constants = ss_constants;
      const StateSolution s = solve_cell(cfg, ss_delta, ss_kappa, 0);
      json j;
      j["a_star"] = s.a_star;
      j["b_star"] = s.b_star;
      j["r_star"] = s.r_star;
      j["v_star"] = s.v_star;
      j["saddle_value"] = s.saddle_value;
      j["residuals"] = s.residuals;
      j["converged"] = s.converged;
      emit(j, ss_out);
      return s.converged ? 0 : kNumericalError;
    }
    if (*exp) {
      ExperimentConfig cfg = parse_experiment_config(read_file(exp_config));
      const ExperimentKind kind = parse_experiment_kind(exp_name);
      if (read_file(exp_config).find("\"experiment\"") != std::string::npos && cfg.experiment != kind)
        throw ConfigError("experiment name '" + exp_name + "' does not match the config's '" +
                          to_string(cfg.experiment) + "'");
      cfg.experiment = kind;
      if (*seed_opt) cfg.seed = exp_seed;
      if (!exp_out.empty()) cfg.out_dir = exp_out;
      if (exp_workers >= 0) cfg.workers = exp_workers;
      if (exp_gnuplot) cfg.gnuplot = true;
      cfg.validate();
      const auto start = std::chrono::steady_clock::now();
      const std::vector<Artifact> artifacts = run_experiment(cfg);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      try {
        write_artifacts(cfg, artifacts, wall);
      } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
      }
      for (const Artifact& a : artifacts) std::cout << (std::filesystem::path(cfg.out_dir) / a.name).string() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "coxht: config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericalError& e) {
    std::cerr << "coxht: numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "coxht: invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "coxht: error: " << e.what() << "\n";
    return kNumericalError;
  }
  return 0;
}
