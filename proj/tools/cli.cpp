#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <ostream>

#include "CLI11.hpp"
#include "config.hpp"
#include "ebt/errors.hpp"
#include "ebt/io.hpp"
#include "ebt/residual.hpp"
#include "ebt/verify.hpp"

namespace ebt::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Common {
  std::string config;
  std::string output_dir;
  std::vector<std::string> overrides;
};

fs::path resolve_output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("EBT_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "Problem configuration (JSON)")->required();
  sub->add_option("-o,--output-dir", c.output_dir,
                  "Directory for artifacts (default: $EBT_OUTPUT_DIR or .)");
  sub->add_option("--set", c.overrides,
                  "Override key=value (N, n, h, boundary_formulation, prune_epsilon, "
                  "snapshot_stride); repeatable");
}

Config load(const Common& c) { return load_config(c.config, parse_overrides(c.overrides)); }

int do_run(const Common& c, std::ostream& out) {
  const Config cfg = load(c);
  const fs::path dir = resolve_output_dir(c.output_dir);
  const Trajectory traj = run(cfg.problem, cfg.run);
  io::write_atomic(dir / "trajectory.csv", io::trajectory_csv(traj));
  io::write_atomic(dir / "trajectory.json", io::dump(io::trajectory_metadata(traj, cfg.effective)));
  io::write_atomic(dir / "final_measure.csv", io::measure_csv(traj.final_snapshot().measure));
  const DiscreteMeasure& fin = traj.final_snapshot().measure;
  out << "model " << cfg.problem.model << ", " << to_string(cfg.problem.formulation)
      << " boundary, N = " << cfg.problem.initial_cohorts
      << ", n = " << cfg.problem.internalizations << ", h_eff = " << io::format_double(traj.step_size)
      << "\n"
      << "snapshots: " << traj.snapshots.size() << ", cohorts at T: " << fin.size()
      << ", total mass at T: " << io::format_double(fin.total_mass()) << "\n"
      << "pruned: " << traj.pruned_count << " cohorts, mass " << io::format_double(traj.pruned_mass)
      << "\n"
      << "wrote " << (dir / "trajectory.csv").string() << ", trajectory.json, final_measure.csv\n";
  return kOk;
}

int do_residual(const Common& c, std::ostream& out) {
  const Config cfg = load(c);
  const fs::path dir = resolve_output_dir(c.output_dir);
  const Trajectory traj = run(cfg.problem, cfg.run);
  const std::vector<TestFunction> family = standard_family(cfg.problem);
  const std::vector<ResidualRow> rows = residual_table(traj, family);
  io::write_atomic(dir / "residual.csv", io::residual_csv(rows));
  double worst_diff = 0.0;
  double norm = 0.0;
  for (const ResidualRow& r : rows) {
    worst_diff = std::max(worst_diff, std::abs(r.quadrature - r.closed_form));
    if (r.t1 == 0.0 && r.t2 == cfg.problem.horizon) norm = std::max(norm, std::abs(r.closed_form));
  }
  out << "test functions: " << family.size() << ", intervals: " << cfg.problem.internalizations
      << "\n"
      << "residual norm (chained closed form): " << io::format_double(norm) << "\n"
      << "max |quadrature - closed form|: " << io::format_double(worst_diff) << "\n"
      << "wrote " << (dir / "residual.csv").string() << "\n";
  return kOk;
}

bool in_range(const std::optional<double>& v, const std::optional<SlopeRange>& r) {
  return v && *v >= r->first && *v <= r->second;
}

int check_assertions(const Config& cfg, const ConvergenceReport& report, std::ostream& out) {
  const AssertSpec& a = cfg.checks;
  bool ok = true;
  auto line = [&](bool pass, const std::string& what) {
    out << (pass ? "PASS " : "FAIL ") << what << "\n";
    ok = ok && pass;
  };
  auto show = [](const std::optional<double>& v) {
    return v ? io::format_double(*v) : std::string("n/a");
  };
  auto range = [&](const char* name, const std::optional<double>& v,
                   const std::optional<SlopeRange>& r) {
    if (!r) return;
    line(in_range(v, r), std::string(name) + " = " + show(v) + " in [" +
                             io::format_double(r->first) + ", " + io::format_double(r->second) +
                             "]");
  };

  bool rows_ok = report.reference_failure.empty();
  for (const StudyRow& r : report.rows) rows_ok = rows_ok && r.failure.empty();
  line(rows_ok, "all rows completed");
  if (a.mass_bound) {
    bool all = true;
    for (const StudyRow& r : report.rows) all = all && r.mass_bound_ok;
    line(all, "mass bound holds on every row");
  }
  range("residual slope in n", report.slope_n.residual_norm, a.residual_slope_n);
  range("residual slope in N", report.slope_N.residual_norm, a.residual_slope_N);
  range("functional_error slope in n", report.slope_n.functional_error, a.functional_slope_n);
  range("functional_error slope in N", report.slope_N.functional_error, a.functional_slope_N);
  range("flat_error slope in n", report.slope_n.flat_error, a.flat_slope_n);
  range("flat_error slope in N", report.slope_N.flat_error, a.flat_slope_N);

  const StudyRow* finest = report.find(cfg.study.N_grid.back(), cfg.study.n_grid.back());
  auto bound = [&](const char* name, std::optional<double> StudyRow::*field,
                   const std::optional<double>& limit) {
    if (!limit) return;
    const std::optional<double> v = finest ? finest->*field : std::nullopt;
    line(v && *v <= *limit,
         std::string(name) + " at finest grid = " + show(v) + " <= " + io::format_double(*limit));
  };
  bound("functional_error", &StudyRow::functional_error, a.max_functional_error);
  bound("flat_error", &StudyRow::flat_error, a.max_flat_error);

  if (a.finest_is_min) {
    const bool use_flat = finest && finest->flat_error;
    auto field = use_flat ? &StudyRow::flat_error : &StudyRow::functional_error;
    std::optional<double> least;
    for (const StudyRow& r : report.rows) {
      if (r.*field) least = least ? std::min(*least, *(r.*field)) : *(r.*field);
    }
    const std::optional<double> v = finest ? finest->*field : std::nullopt;
    line(v && least && *v <= *a.finest_is_min * *least,
         std::string(use_flat ? "flat_error" : "functional_error") + " at finest grid = " +
             show(v) + " <= " + io::format_double(*a.finest_is_min) + " x grid minimum " +
             show(least));
  }
  return ok ? kOk : kAssertFailure;
}

int do_converge(const Common& c, unsigned jobs, bool assert_mode, bool timing, std::ostream& out) {
  Config cfg = load(c);
  if (!cfg.has_study) throw ConfigError("config: converge needs a 'converge' section");
  cfg.study.jobs = jobs;
  const fs::path dir = resolve_output_dir(c.output_dir);
  const auto start = std::chrono::steady_clock::now();
  const ConvergenceReport report = convergence_study(cfg.problem, cfg.study);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  io::write_atomic(dir / "report.csv", io::report_csv(report, timing));
  json summary = io::report_summary(report);
  summary["config"] = cfg.effective;
  io::write_atomic(dir / "report.json", io::dump(summary));
  if (timing) {
    json t;
    t["total_s"] = elapsed;
    t["rows"] = json::array();
    for (const StudyRow& r : report.rows) {
      t["rows"].push_back({{"N", r.N}, {"n", r.n}, {"runtime_s", r.runtime_s}});
    }
    io::write_atomic(dir / "timing.json", io::dump(t));
  }

  out << "rows: " << report.rows.size() << ", wall time " << std::fixed << std::setprecision(2)
      << elapsed << " s\n";
  out.unsetf(std::ios::floatfield);
  auto show = [](const std::optional<double>& v) {
    return v ? io::format_double(*v) : std::string("n/a");
  };
  out << "slopes along N: residual " << show(report.slope_N.residual_norm) << ", functional "
      << show(report.slope_N.functional_error) << ", flat " << show(report.slope_N.flat_error)
      << "\n"
      << "slopes along n: residual " << show(report.slope_n.residual_norm) << ", functional "
      << show(report.slope_n.functional_error) << ", flat " << show(report.slope_n.flat_error)
      << "\n";
  for (const StudyRow& r : report.rows) {
    if (!r.failure.empty()) out << "row N=" << r.N << " n=" << r.n << " failed: " << r.failure << "\n";
  }
  if (!report.reference_failure.empty()) {
    out << "reference run failed: " << report.reference_failure << "\n";
  }
  out << "wrote " << (dir / "report.csv").string() << ", report.json"
      << (timing ? ", timing.json" : "") << "\n";

  if (assert_mode) return check_assertions(cfg, report, out);
  bool failed = !report.reference_failure.empty();
  for (const StudyRow& r : report.rows) failed = failed || !r.failure.empty();
  return failed ? kNumericalFailure : kOk;
}

int do_validate(const Common& c, std::ostream& out) {
  const Config cfg = load(c);
  const fs::path dir = resolve_output_dir(c.output_dir);
  const ProblemSpec& p = cfg.problem;
  const double g_sup = p.rates.bounds ? p.rates.bounds->growth : 0.0;
  const double beta_sup = p.rates.bounds ? p.rates.bounds->fecundity : 0.0;

  const DiscreteMeasure base = assemble_measure(init_cohorts(p));
  auto transform = [&](double scale, double shift) {
    std::vector<Atom> atoms;
    for (const Atom& a : base.atoms()) atoms.push_back({a.location + shift, a.mass * scale});
    return DiscreteMeasure(std::move(atoms));
  };
  const std::vector<DiscreteMeasure> probes = {DiscreteMeasure{}, base, transform(0.5, 0.0),
                                               // heaviest reachable population
                                               transform(std::exp(beta_sup * p.horizon), 0.0),
                                               transform(1.0, g_sup * p.horizon)};
  double lo = p.birth_size;
  double hi = std::max(lo, base.empty() ? lo : base.max_location()) + g_sup * p.horizon;
  if (hi <= lo) hi = lo + 1.0;
  if (cfg.validate.x_range) std::tie(lo, hi) = *cfg.validate.x_range;

  const ValidationReport report = validate_rates(p.rates, lo, hi, probes, cfg.validate.points);
  json j;
  j["model"] = p.model;
  j["x_range"] = {lo, hi};
  j["points"] = cfg.validate.points;
  j["probe_count"] = probes.size();
  j["ok"] = report.ok();
  j["violations"] = json::array();
  for (const RateViolation& v : report.violations) {
    j["violations"].push_back({{"kind", v.kind}, {"rate", v.rate}, {"x", v.x}, {"detail", v.detail}});
  }
  io::write_atomic(dir / "validation.json", io::dump(j));
  out << "model " << p.model << ": " << report.violations.size() << " violation(s) over "
      << cfg.validate.points << " points x " << probes.size() << " probes on ["
      << io::format_double(lo) << ", " << io::format_double(hi) << "]\n";
  const std::size_t shown = std::min<std::size_t>(report.violations.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) {
    const RateViolation& v = report.violations[i];
    out << "  " << v.kind << " " << v.rate << " at x = " << io::format_double(v.x) << ": "
        << v.detail << "\n";
  }
  if (shown < report.violations.size()) {
    out << "  ... " << report.violations.size() - shown << " more in validation.json\n";
  }
  return report.ok() ? kOk : kConfigError;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Escalator Boxcar Train solver and convergence harness", "ebt"};
  app.require_subcommand(1);
  Common run_opts, residual_opts, converge_opts, validate_opts;
  unsigned jobs = 0;
  bool assert_mode = false;
  bool timing = false;

  CLI::App* run_cmd = app.add_subcommand("run", "Integrate a problem and write its trajectory");
  add_common(run_cmd, run_opts);
  CLI::App* residual_cmd =
      app.add_subcommand("residual", "Weak-form residuals over the standard test functions");
  add_common(residual_cmd, residual_opts);
  CLI::App* converge_cmd = app.add_subcommand("converge", "Convergence study over (N, n)");
  add_common(converge_cmd, converge_opts);
  converge_cmd->add_option("-j,--jobs", jobs, "Worker threads (default: hardware concurrency)");
  converge_cmd->add_flag("--assert", assert_mode, "Check the config's assertions; exit 3 on failure");
  converge_cmd->add_flag("--timing", timing, "Add runtime_s to report.csv and write timing.json");
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "Sampled check of rate assumptions (no solve)");
  add_common(validate_cmd, validate_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) return do_run(run_opts, out);
    if (*residual_cmd) return do_residual(residual_opts, out);
    if (*converge_cmd) return do_converge(converge_opts, jobs, assert_mode, timing, out);
    return do_validate(validate_opts, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const EvaluationError& e) {
    err << "evaluation failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const CapacityError& e) {
    err << "capacity exceeded: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalFailure;
  }
}

}  // namespace ebt::cli
