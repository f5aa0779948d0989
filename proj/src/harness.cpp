#include "coxht/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <boost/uuid/detail/sha1.hpp>
#include <json.hpp>

#include "coxht/coxfit.hpp"
#include "coxht/errors.hpp"
#include "coxht/existence.hpp"
#include "coxht/inference.hpp"
#include "coxht/numcore/parallel.hpp"
#include "coxht/numcore/rng.hpp"

namespace coxht {

using nlohmann::json;

namespace {

constexpr std::uint64_t kBetaTag = 0x62657461ULL;
constexpr std::uint64_t kBoundaryTag = 0x626f756eULL;
constexpr std::uint64_t kStateTag = 0x73746174ULL;
constexpr std::uint64_t kCoarseTag = 0x636f6172ULL;

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RngStream rep_stream(std::uint64_t seed, std::size_t cell, std::size_t rep, std::uint32_t sub = 0) {
  return RngStream(seed, (static_cast<std::uint64_t>(cell) << 32) | rep, sub);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class Csv {
 public:
  explicit Csv(std::string header) { out_ << header << '\n'; }
  template <typename... Ts>
  void row(const Ts&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << field(fields), first = false), ...);
    out_ << '\n';
  }
  Artifact finish(std::string name) const { return {std::move(name), out_.str()}; }

 private:
  static std::string field(double v) { return num(v); }
  static std::string field(int v) { return std::to_string(v); }
  static std::string field(long v) { return std::to_string(v); }
  static std::string field(std::size_t v) { return std::to_string(v); }
  static std::string field(bool v) { return v ? "true" : "false"; }
  static std::string field(const std::string& v) { return v; }
  static std::string field(const char* v) { return v; }
  std::ostringstream out_;
};

struct Draw {
  Eigen::VectorXd beta;
  SortedCohort sorted;
  Eigen::MatrixXd xs;  // sorted order
};

Draw draw(const ModelConfig& model, std::uint64_t seed, std::size_t cell, std::size_t rep,
          const Eigen::VectorXd* fixed_beta) {
  RngStream stream = rep_stream(seed, cell, rep);
  Draw d;
  d.beta = fixed_beta != nullptr ? *fixed_beta : gen_beta(model, stream);
  const Cohort cohort = generate_cohort(model, d.beta, stream);
  d.sorted = sort_cohort(cohort);
  d.xs = d.sorted.permute_rows(cohort.x);
  return d;
}

struct Cell {
  double delta = 0.0;
  double kappa = 0.0;
  ModelConfig model;
  Eigen::VectorXd fixed_beta;  // empty unless model.fix_beta
};

std::vector<Cell> make_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (double kappa : cfg.kappa_grid)
    for (double delta : cfg.delta_grid) {
      Cell c;
      c.delta = delta;
      c.kappa = kappa;
      c.model = cfg.model;
      c.model.kappa = kappa;
      c.model.p = columns_for(delta, cfg.model.n);
      try {
        c.model.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("cell (delta=") + num(delta) + ", kappa=" + num(kappa) + "): " + e.what());
      }
      if (c.model.fix_beta) {
        RngStream s(derived_seed(cfg.seed, kBetaTag), cells.size());
        c.fixed_beta = gen_beta(c.model, s);
      }
      cells.push_back(std::move(c));
    }
  return cells;
}

const Eigen::VectorXd* beta_of(const Cell& c) { return c.model.fix_beta ? &c.fixed_beta : nullptr; }

double realized_delta(const Cell& c) { return static_cast<double>(c.model.p) / c.model.n; }

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::vector<StateSolution> solve_cells(const ExperimentConfig& cfg, const std::vector<Cell>& cells) {
  std::vector<StateSolution> out(cells.size());
  parallel_for(cells.size(), cfg.effective_workers(), [&](std::size_t c) {
    try {
      out[c] = solve_cell(cfg, realized_delta(cells[c]), cells[c].kappa, c);
    } catch (const NumericalError&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      out[c].a_star = out[c].b_star = out[c].r_star = out[c].v_star = out[c].saddle_value = nan;
      out[c].residuals = {nan, nan, nan};
      out[c].converged = false;
    }
  });
  return out;
}

std::vector<Eigen::Index> designated(const std::vector<Eigen::Index>& nulls, int count) {
  std::vector<Eigen::Index> d(nulls.begin(), nulls.begin() + std::min<std::size_t>(nulls.size(), count));
  return d;
}

void shuffle(std::vector<Eigen::Index>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

Artifact gnuplot(const std::string& name, const std::string& body) { return {name, body}; }

}  // namespace

ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "phase_diagram") return ExperimentKind::phase_diagram;
  if (name == "consistency") return ExperimentKind::consistency;
  if (name == "null_dist") return ExperimentKind::null_dist;
  if (name == "classical_failure") return ExperimentKind::classical_failure;
  throw ConfigError("unknown experiment '" + name +
                    "' (expected phase_diagram, consistency, null_dist or classical_failure)");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::phase_diagram: return "phase_diagram";
    case ExperimentKind::consistency: return "consistency";
    case ExperimentKind::null_dist: return "null_dist";
    case ExperimentKind::classical_failure: return "classical_failure";
  }
  return "?";
}

int columns_for(double delta, int n) { return std::max(1, static_cast<int>(std::lround(delta * n))); }

void ExperimentConfig::validate() const {
  if (delta_grid.empty() || kappa_grid.empty()) throw ConfigError("grids.delta and grids.kappa must be nonempty");
  for (double d : delta_grid)
    if (!(d > 0.0 && d < 1.0)) throw ConfigError("grids.delta values must lie in (0, 1)");
  for (double k : kappa_grid)
    if (!(k >= 0.0) || !std::isfinite(k)) throw ConfigError("grids.kappa values must be finite and >= 0");
  if (reps < 1) throw ConfigError("reps must be >= 1");
  if (workers < 0) throw ConfigError("workers must be >= 0");
  if (qp_reps < 1 || qp_n < 1) throw ConfigError("qp_reps and qp_n must be >= 1");
  if (n_rep < 10 || coarse_n_rep < 10) throw ConfigError("n_rep and coarse_n_rep must be >= 10");
  if (constants != "population" && constants != "empirical")
    throw ConfigError("constants must be 'population' or 'empirical'");
  if (fisher_at != "truth" && fisher_at != "estimate") throw ConfigError("fisher_at must be 'truth' or 'estimate'");
  if (null_coords < 1) throw ConfigError("null_coords must be >= 1");
  if (chi2_partitions < 1) throw ConfigError("chi2_partitions must be >= 1");
  for (int l : chi2_groups)
    if (l < 1) throw ConfigError("chi2_groups entries must be >= 1");
  if (lrt_coords < 0) throw ConfigError("lrt_coords must be >= 0");
  if (experiment == ExperimentKind::null_dist && model.beta_scheme != BetaScheme::half_sparse)
    throw ConfigError("null_dist requires model.beta_scheme = half_sparse");
  if ((experiment == ExperimentKind::consistency) && std::find(kappa_grid.begin(), kappa_grid.end(), 0.0) != kappa_grid.end())
    throw ConfigError("consistency requires kappa > 0");
  try {
    ModelConfig m = model;
    m.p = columns_for(delta_grid.front(), model.n);
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

int ExperimentConfig::effective_workers() const { return workers > 0 ? workers : default_workers(); }

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "experiment") {
        c.experiment = parse_experiment_kind(v.get<std::string>());
      } else if (k == "model") {
        if (!v.is_object()) throw ConfigError("model must be an object");
        for (auto m = v.begin(); m != v.end(); ++m) {
          const std::string& mk = m.key();
          if (mk == "n") c.model.n = m->get<int>();
          else if (mk == "p") c.model.p = m->get<int>();
          else if (mk == "kappa") c.model.kappa = m->get<double>();
          else if (mk == "baseline_rate") c.model.baseline_rate = m->get<double>();
          else if (mk == "censor_lo") c.model.censor_lo = m->get<double>();
          else if (mk == "censor_hi") c.model.censor_hi = m->get<double>();
          else if (mk == "beta_scheme") {
            try {
              c.model.beta_scheme = parse_beta_scheme(m->get<std::string>());
            } catch (const std::invalid_argument& e) {
              throw ConfigError(e.what());
            }
          } else if (mk == "renormalize_beta") c.model.renormalize_beta = m->get<bool>();
          else if (mk == "fix_beta") c.model.fix_beta = m->get<bool>();
          else throw ConfigError("unknown key model." + mk);
        }
      } else if (k == "grids") {
        if (!v.is_object()) throw ConfigError("grids must be an object");
        for (auto g = v.begin(); g != v.end(); ++g) {
          if (g.key() == "delta") c.delta_grid = g->get<std::vector<double>>();
          else if (g.key() == "kappa") c.kappa_grid = g->get<std::vector<double>>();
          else throw ConfigError("unknown key grids." + g.key());
        }
      } else if (k == "reps") c.reps = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "out_dir") c.out_dir = v.get<std::string>();
      else if (k == "workers") c.workers = v.get<int>();
      else if (k == "qp_reps") c.qp_reps = v.get<int>();
      else if (k == "qp_n") c.qp_n = v.get<int>();
      else if (k == "n_rep") c.n_rep = v.get<int>();
      else if (k == "coarse_n_rep") c.coarse_n_rep = v.get<int>();
      else if (k == "constants") c.constants = v.get<std::string>();
      else if (k == "null_coords") c.null_coords = v.get<int>();
      else if (k == "chi2_groups") c.chi2_groups = v.get<std::vector<int>>();
      else if (k == "chi2_partitions") c.chi2_partitions = v.get<int>();
      else if (k == "lrt_coords") c.lrt_coords = v.get<int>();
      else if (k == "fisher_at") c.fisher_at = v.get<std::string>();
      else if (k == "gnuplot") c.gnuplot = v.get<bool>();
      else throw ConfigError("unknown key " + k);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has an ill-typed value: ") + e.what());
  }
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = to_string(c.experiment);
  j["model"] = {{"n", c.model.n},
                {"p", c.model.p},
                {"kappa", c.model.kappa},
                {"baseline_rate", c.model.baseline_rate},
                {"censor_lo", c.model.censor_lo},
                {"censor_hi", c.model.censor_hi},
                {"beta_scheme", to_string(c.model.beta_scheme)},
                {"renormalize_beta", c.model.renormalize_beta},
                {"fix_beta", c.model.fix_beta}};
  j["grids"] = {{"delta", c.delta_grid}, {"kappa", c.kappa_grid}};
  j["reps"] = c.reps;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["workers"] = c.workers;
  j["qp_reps"] = c.qp_reps;
  j["qp_n"] = c.qp_n;
  j["n_rep"] = c.n_rep;
  j["coarse_n_rep"] = c.coarse_n_rep;
  j["constants"] = c.constants;
  j["null_coords"] = c.null_coords;
  j["chi2_groups"] = c.chi2_groups;
  j["chi2_partitions"] = c.chi2_partitions;
  j["lrt_coords"] = c.lrt_coords;
  j["fisher_at"] = c.fisher_at;
  j["gnuplot"] = c.gnuplot;
  return j.dump(2);
}

StateSolution solve_cell(const ExperimentConfig& cfg, double delta, double kappa, std::uint64_t cell) {
  ModelConfig m = cfg.model;
  m.kappa = kappa;
  const auto constants = [&](const EnvelopeContext& ctx) {
    return cfg.constants == "empirical"
               ? empirical_constants(ctx, kappa, delta)
               : censoring_expectations(kappa, m.baseline_rate, m.censor_lo, m.censor_hi, delta);
  };
  const EnvelopeContext coarse =
      make_envelope_context(m, std::min(cfg.coarse_n_rep, cfg.n_rep), derived_seed(cfg.seed, kCoarseTag), cell);
  StateSolveOptions nested;
  nested.tol = 1e-3;
  StateSolution start = solve_state_equations(coarse, constants(coarse), {1.0, 1.0, 1.0}, nested);
  start.converged = false;
  const EnvelopeContext ctx = make_envelope_context(m, cfg.n_rep, derived_seed(cfg.seed, kStateTag), cell);
  try {
    return refine_state_solution(ctx, constants(ctx), start);
  } catch (const std::exception&) {
    return start;
  }
}

PhaseDiagramResult run_phase_diagram(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<Cell> cells = make_cells(cfg);
  PhaseDiagramResult res;
  Csv table("delta,kappa,exist_frac,reps,p,failed");
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<int> verdict(static_cast<std::size_t>(cfg.reps), -1);
    parallel_for(verdict.size(), cfg.effective_workers(), [&](std::size_t r) {
      const Draw d = draw(cells[c].model, cfg.seed, c, r, beta_of(cells[c]));
      try {
        verdict[r] = mple_exists(d.sorted, d.xs) ? 1 : 0;
      } catch (const NumericalError&) {
        verdict[r] = -1;
      } catch (const std::invalid_argument&) {
        verdict[r] = 1;  // no events: the partial likelihood is constant, every beta is a maximizer
      }
    });
    PhaseCell pc;
    pc.delta = cells[c].delta;
    pc.kappa = cells[c].kappa;
    pc.p = cells[c].model.p;
    pc.reps = cfg.reps;
    int yes = 0;
    for (int v : verdict) {
      if (v < 0) ++pc.failed;
      yes += v == 1;
    }
    pc.exist_frac = pc.failed < cfg.reps ? static_cast<double>(yes) / (cfg.reps - pc.failed) : 0.0;
    table.row(pc.delta, pc.kappa, pc.exist_frac, pc.reps, pc.p, pc.failed);
    res.cells.push_back(pc);
  }
  res.artifacts.push_back(table.finish("phase_diagram.csv"));

  std::vector<double> kappas = cfg.kappa_grid;
  std::sort(kappas.begin(), kappas.end());
  kappas.erase(std::unique(kappas.begin(), kappas.end()), kappas.end());
  res.boundary =
      boundary_curve(cfg.model, kappas, cfg.qp_n, cfg.qp_reps, derived_seed(cfg.seed, kBoundaryTag), cfg.effective_workers());
  Csv bc("kappa,delta_hat,stderr");
  for (const BoundaryPoint& b : res.boundary) bc.row(b.kappa, b.delta_hat, b.stderr);
  res.artifacts.push_back(bc.finish("boundary.csv"));
  if (cfg.gnuplot)
    res.artifacts.push_back(gnuplot("phase_diagram.gp",
                                    "set datafile separator ','\n"
                                    "set xlabel 'kappa'\nset ylabel 'delta'\nset key autotitle columnhead\n"
                                    "plot 'phase_diagram.csv' using 2:1:3 with points palette pt 5, \\\n"
                                    "     'boundary.csv' using 1:2 with linespoints lw 2\n"));
  return res;
}

ConsistencyResult run_consistency(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<Cell> cells = make_cells(cfg);
  ConsistencyResult res;
  const std::vector<StateSolution> sols = solve_cells(cfg, cells);
  Csv table("kappa,delta,a_hat_mean,a_hat_se,b_hat_mean,b_hat_se,a_star,b_star,solver_converged,p,fits,failed,"
            "rel_err_mean,rel_err_star");
  for (std::size_t c = 0; c < cells.size(); ++c) {
    struct Rep {
      bool ok = false;
      double a = 0.0, b = 0.0, e = 0.0;
    };
    std::vector<Rep> reps(static_cast<std::size_t>(cfg.reps));
    parallel_for(reps.size(), cfg.effective_workers(), [&](std::size_t r) {
      const Draw d = draw(cells[c].model, cfg.seed, c, r, beta_of(cells[c]));
      try {
        const FitResult f = fit_mple(d.sorted, d.xs);
        if (!f.converged || f.diverged) return;
        const AbEstimate ab = empirical_ab(f.beta_hat, d.beta);
        reps[r] = {true, ab.a_hat, ab.b_hat, (f.beta_hat - d.beta).squaredNorm() / d.beta.squaredNorm()};
      } catch (const NumericalError&) {
      }
    });
    std::vector<double> as, bs, es;
    ConsistencyCell cc;
    for (const Rep& r : reps) {
      if (!r.ok) {
        ++cc.failed;
        continue;
      }
      as.push_back(r.a);
      bs.push_back(r.b);
      es.push_back(r.e);
    }
    cc.kappa = cells[c].kappa;
    cc.delta = cells[c].delta;
    cc.p = cells[c].model.p;
    cc.fits = static_cast<int>(as.size());
    cc.a_hat_mean = mean(as);
    cc.a_hat_se = std_error(as);
    cc.b_hat_mean = mean(bs);
    cc.b_hat_se = std_error(bs);
    cc.rel_err_mean = mean(es);
    cc.solution = sols[c];
    const double rel_star = cc.kappa > 0.0 ? theoretical_errors(cc.solution, cc.kappa).rel_err_sq : 0.0;
    table.row(cc.kappa, cc.delta, cc.a_hat_mean, cc.a_hat_se, cc.b_hat_mean, cc.b_hat_se, cc.solution.a_star,
              cc.solution.b_star, cc.solution.converged, cc.p, cc.fits, cc.failed, cc.rel_err_mean, rel_star);
    res.cells.push_back(cc);
  }
  res.artifacts.push_back(table.finish("consistency.csv"));
  if (cfg.gnuplot)
    res.artifacts.push_back(gnuplot("consistency.gp",
                                    "set datafile separator ','\nset key autotitle columnhead\n"
                                    "set xlabel 'delta'\n"
                                    "plot 'consistency.csv' using 2:3:4 with yerrorbars title 'a_hat', \\\n"
                                    "     '' using 2:7 with linespoints title 'a*', \\\n"
                                    "     '' using 2:5:6 with yerrorbars title 'b_hat', \\\n"
                                    "     '' using 2:8 with linespoints title 'b*'\n"));
  return res;
}

NullDistributionResult run_null_distribution(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<Cell> cells = make_cells(cfg);
  NullDistributionResult res;
  const std::vector<StateSolution> sols = solve_cells(cfg, cells);
  Csv pv("delta,kappa,rep,coord,beta_hat,p_corrected,p_classical");
  Csv chi("delta,kappa,rep,l,partition,group,statistic,p_value");
  Csv summary("delta,kappa,p,family,count,ks_d,b_star,solver_converged,failed");

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const double b_star = sols[c].b_star;
    struct Rep {
      bool ok = false;
      std::vector<Eigen::Index> coords;
      Eigen::VectorXd beta, p_corr, p_class;
      std::vector<std::array<double, 5>> chi2;  // l, partition, group, statistic, p
    };
    std::vector<Rep> reps(static_cast<std::size_t>(cfg.reps));
    parallel_for(reps.size(), cfg.effective_workers(), [&](std::size_t r) {
      const Draw d = draw(cells[c].model, cfg.seed, c, r, beta_of(cells[c]));
      Rep out;
      try {
        const FitResult f = fit_mple(d.sorted, d.xs);
        if (!f.converged || f.diverged) return;
        out.coords = designated(null_coordinates(d.beta), cfg.null_coords);
        const Eigen::Index m = static_cast<Eigen::Index>(out.coords.size());
        if (m == 0) return;
        const Eigen::VectorXd fs = fisher_std(d.sorted, d.xs, cfg.fisher_at == "truth" ? d.beta : f.beta_hat);
        out.beta.resize(m);
        Eigen::VectorXd se(m);
        for (Eigen::Index k = 0; k < m; ++k) {
          out.beta[k] = f.beta_hat[out.coords[k]];
          se[k] = fs[out.coords[k]];
        }
        out.p_corr = corrected_pvalues(out.beta, b_star);
        out.p_class = classical_pvalues(out.beta, se);
        RngStream perm = rep_stream(cfg.seed, c, r, 1);
        for (int l : cfg.chi2_groups) {
          for (int part = 0; part < cfg.chi2_partitions; ++part) {
            std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
            for (Eigen::Index k = 0; k < m; ++k) order[k] = k;
            if (part > 0) shuffle(order, perm);
            for (Eigen::Index g = 0; (g + 1) * l <= m; ++g) {
              Eigen::VectorXd sub(l);
              for (int t = 0; t < l; ++t) sub[t] = out.beta[order[g * l + t]];
              const TestReport w = wald_chi2(sub, b_star);
              out.chi2.push_back({static_cast<double>(l), static_cast<double>(part), static_cast<double>(g),
                                  w.statistic, w.p_value});
            }
          }
        }
        out.ok = true;
        reps[r] = std::move(out);
      } catch (const NumericalError&) {
      }
    });

    NullCell nc;
    nc.delta = cells[c].delta;
    nc.kappa = cells[c].kappa;
    nc.p = cells[c].model.p;
    nc.b_star = b_star;
    nc.solver_converged = sols[c].converged;
    std::vector<double> corr, clas;
    std::vector<std::vector<double>> chi_by_l(cfg.chi2_groups.size());
    for (std::size_t r = 0; r < reps.size(); ++r) {
      const Rep& rep = reps[r];
      if (!rep.ok) {
        ++nc.failed;
        continue;
      }
      for (Eigen::Index k = 0; k < rep.beta.size(); ++k) {
        pv.row(nc.delta, nc.kappa, r, static_cast<long>(rep.coords[k]), rep.beta[k], rep.p_corr[k], rep.p_class[k]);
        corr.push_back(rep.p_corr[k]);
        clas.push_back(rep.p_class[k]);
      }
      for (const auto& row : rep.chi2) {
        chi.row(nc.delta, nc.kappa, r, static_cast<int>(row[0]), static_cast<int>(row[1]), static_cast<int>(row[2]),
                row[3], row[4]);
        const auto idx = std::find(cfg.chi2_groups.begin(), cfg.chi2_groups.end(), static_cast<int>(row[0])) -
                         cfg.chi2_groups.begin();
        chi_by_l[static_cast<std::size_t>(idx)].push_back(row[4]);
      }
    }
    const auto family = [&](const std::string& name, const std::vector<double>& v) {
      PvalueFamily f;
      f.name = name;
      f.count = static_cast<int>(v.size());
      f.ks_d = v.empty() ? 1.0 : ks_uniform_stat(v);
      nc.families.push_back(f);
      summary.row(nc.delta, nc.kappa, nc.p, f.name, f.count, f.ks_d, nc.b_star, nc.solver_converged, nc.failed);
    };
    family("corrected_z", corr);
    family("classical_z", clas);
    for (std::size_t i = 0; i < cfg.chi2_groups.size(); ++i)
      family("chi2_l" + std::to_string(cfg.chi2_groups[i]), chi_by_l[i]);
    res.cells.push_back(nc);
  }
  res.artifacts.push_back(pv.finish("null_pvalues.csv"));
  res.artifacts.push_back(chi.finish("chi2_pvalues.csv"));
  res.artifacts.push_back(summary.finish("null_summary.csv"));
  if (cfg.gnuplot)
    res.artifacts.push_back(gnuplot("null_dist.gp",
                                    "set datafile separator ','\nset key autotitle columnhead\n"
                                    "bin(x) = 0.05 * floor(x / 0.05) + 0.025\nset boxwidth 0.05\n"
                                    "plot 'null_pvalues.csv' using (bin($6)):(1.0) smooth frequency with boxes "
                                    "title 'corrected', \\\n"
                                    "     '' using (bin($7)):(1.0) smooth frequency with boxes title 'classical'\n"));
  return res;
}

ClassicalFailureResult run_classical_failure(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<Cell> cells = make_cells(cfg);
  ClassicalFailureResult res;
  const std::vector<StateSolution> sols = solve_cells(cfg, cells);
  Csv coords("delta,kappa,coord,emp_std,fisher_std_mean,ratio");
  Csv lrt("delta,kappa,rep,coord,statistic,p_value");
  Csv summary("delta,kappa,p,ratio_mean,lrt_ks_d,lrt_count,slope,a_star,b_star,solver_converged,failed");

  for (std::size_t c = 0; c < cells.size(); ++c) {
    struct Rep {
      bool ok = false;
      Eigen::VectorXd beta, beta_hat, fisher;
      std::vector<std::array<double, 3>> lrt;  // coord, statistic, p
    };
    std::vector<Rep> reps(static_cast<std::size_t>(cfg.reps));
    parallel_for(reps.size(), cfg.effective_workers(), [&](std::size_t r) {
      const Draw d = draw(cells[c].model, cfg.seed, c, r, beta_of(cells[c]));
      Rep out;
      try {
        const FitResult f = fit_mple(d.sorted, d.xs);
        if (!f.converged || f.diverged) return;
        out.beta = d.beta;
        out.beta_hat = f.beta_hat;
        out.fisher = fisher_std(d.sorted, d.xs, cfg.fisher_at == "truth" ? d.beta : f.beta_hat);
        const std::vector<Eigen::Index> nulls = designated(null_coordinates(d.beta), cfg.lrt_coords);
        for (Eigen::Index j : nulls) {
          const LrtResult t = lrt_stat(d.sorted, d.xs, j, {}, &f);
          if (!t.diverged && std::isfinite(t.statistic)) out.lrt.push_back({static_cast<double>(j), t.statistic, t.p_value});
        }
        out.ok = true;
        reps[r] = std::move(out);
      } catch (const NumericalError&) {
      }
    });

    ClassicalCell cc;
    cc.delta = cells[c].delta;
    cc.kappa = cells[c].kappa;
    cc.p = cells[c].model.p;
    cc.a_star = sols[c].a_star;
    cc.b_star = sols[c].b_star;
    cc.solver_converged = sols[c].converged;
    const Eigen::Index p = cc.p;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(p), sumsq = Eigen::VectorXd::Zero(p), fsum = Eigen::VectorXd::Zero(p);
    std::vector<int> null_count(static_cast<std::size_t>(p), 0);
    double cross = 0.0, norm = 0.0;
    std::vector<double> lrt_p;
    for (std::size_t r = 0; r < reps.size(); ++r) {
      const Rep& rep = reps[r];
      if (!rep.ok) {
        ++cc.failed;
        continue;
      }
      for (Eigen::Index j = 0; j < p; ++j) {
        if (rep.beta[j] != 0.0) continue;
        ++null_count[j];
        sum[j] += rep.beta_hat[j];
        sumsq[j] += rep.beta_hat[j] * rep.beta_hat[j];
        fsum[j] += rep.fisher[j];
      }
      cross += rep.beta_hat.dot(rep.beta);
      norm += rep.beta.squaredNorm();
      for (const auto& t : rep.lrt) {
        lrt.row(cc.delta, cc.kappa, r, static_cast<int>(t[0]), t[1], t[2]);
        lrt_p.push_back(t[2]);
      }
    }
    std::vector<double> ratios;
    for (Eigen::Index j = 0; j < p; ++j) {
      const int m = null_count[j];
      if (m < 2) continue;
      const double mu = sum[j] / m;
      const double emp = std::sqrt(std::max(0.0, (sumsq[j] - m * mu * mu) / (m - 1)));
      const double fmean = fsum[j] / m;
      coords.row(cc.delta, cc.kappa, static_cast<int>(j), emp, fmean, emp / fmean);
      ratios.push_back(emp / fmean);
    }
    cc.ratio_mean = mean(ratios);
    cc.lrt_count = static_cast<int>(lrt_p.size());
    cc.lrt_ks_d = lrt_p.empty() ? 0.0 : ks_uniform_stat(lrt_p);
    cc.slope = norm > 0.0 ? cross / norm : 0.0;
    summary.row(cc.delta, cc.kappa, cc.p, cc.ratio_mean, cc.lrt_ks_d, cc.lrt_count, cc.slope, cc.a_star, cc.b_star,
                cc.solver_converged, cc.failed);
    res.cells.push_back(cc);
  }
  res.artifacts.push_back(coords.finish("classical_failure.csv"));
  res.artifacts.push_back(lrt.finish("lrt_pvalues.csv"));
  res.artifacts.push_back(summary.finish("classical_summary.csv"));
  if (cfg.gnuplot)
    res.artifacts.push_back(gnuplot("classical_failure.gp",
                                    "set datafile separator ','\nset key autotitle columnhead\n"
                                    "set xlabel 'null coordinate'\n"
                                    "plot 'classical_failure.csv' using 3:4 with points title 'empirical std', \\\n"
                                    "     '' using 3:5 with lines title 'Fisher std'\n"));
  return res;
}

std::vector<Artifact> run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::phase_diagram: return run_phase_diagram(cfg).artifacts;
    case ExperimentKind::consistency: return run_consistency(cfg).artifacts;
    case ExperimentKind::null_dist: return run_null_distribution(cfg).artifacts;
    case ExperimentKind::classical_failure: return run_classical_failure(cfg).artifacts;
  }
  throw ConfigError("unknown experiment");
}

std::string git_blob_hash(const std::string& content) {
  boost::uuids::detail::sha1 h;
  const std::string head = "blob " + std::to_string(content.size()) + '\0';
  h.process_bytes(head.data(), head.size());
  h.process_bytes(content.data(), content.size());
  boost::uuids::detail::sha1::digest_type digest;
  h.get_digest(digest);
  std::string out;
  char buf[9];
  for (unsigned word : digest) {
    std::snprintf(buf, sizeof buf, "%08x", word);
    out += buf;
  }
  return out;
}

void write_artifacts(const ExperimentConfig& cfg, const std::vector<Artifact>& artifacts, double wall_seconds) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + cfg.out_dir + ": " + ec.message());
  const std::string config_text = config_to_json(cfg);
  const auto write = [](const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + path.string());
  };
  for (const Artifact& a : artifacts) {
    const fs::path path = fs::path(cfg.out_dir) / a.name;
    write(path, a.content);
    if (path.extension() != ".csv") continue;
    json side;
    side["artifact"] = a.name;
    side["experiment"] = to_string(cfg.experiment);
    side["config"] = json::parse(config_text);
    side["input_hash"] = git_blob_hash(config_text);
    side["content_hash"] = git_blob_hash(a.content);
    side["rows"] = std::count(a.content.begin(), a.content.end(), '\n') - 1;
    side["wall_time_s"] = wall_seconds;
    fs::path sidecar = path;
    sidecar.replace_extension(".json");
    write(sidecar, side.dump(2) + "\n");
  }
}

}  // namespace coxht
