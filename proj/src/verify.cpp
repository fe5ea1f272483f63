#include "ebt/verify.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "ebt/density.hpp"
#include "ebt/errors.hpp"

namespace ebt {

double oracle_functional(const ProblemSpec& problem, const TestFunction& phi, double T) {
  if (!problem.constant_rates) {
    throw ConfigError("oracle_functional needs a constant-coefficient model, got '" +
                      problem.model + "'");
  }
  const double g0 = problem.constant_rates->growth;
  const double mu0 = problem.constant_rates->mortality;
  const double beta0 = problem.constant_rates->fecundity;
  const double xb = problem.birth_size;
  auto value = [&](double x) { return eval_testfn(phi, x, T).value; };

  const double decay = std::exp(-mu0 * T);
  auto transported = [&](double x0) { return value(x0 + g0 * T) * decay; };
  double initial_part = 0.0;
  if (const auto* m = std::get_if<DiscreteMeasure>(&problem.initial)) {
    initial_part = integrate(*m, transported);
  } else {
    const double lo = phi.center - phi.half_width - g0 * T;
    const double hi = phi.center + phi.half_width - g0 * T;
    initial_part = integrate_density(std::get<DensitySpec>(problem.initial), transported, {lo, hi});
  }

  const double p0 = initial_mass(problem.initial);
  if (beta0 == 0.0 || p0 == 0.0) return initial_part;
  auto births = [&](double s) {
    return value(xb + g0 * (T - s)) * std::exp(-mu0 * (T - s)) * beta0 * p0 *
           std::exp((beta0 - mu0) * s);
  };
  std::vector<double> breaks;
  if (g0 > 0.0) {
    for (double edge : {phi.center - phi.half_width, phi.center + phi.half_width}) {
      const double s = T - (edge - xb) / g0;
      if (s > 0.0 && s < T) breaks.push_back(s);
    }
  }
  return initial_part + quadrature(births, 0.0, T, breaks, 1e-12);
}

double flat_error(const Trajectory& traj, const DiscreteMeasure& reference) {
  return flat_distance(traj.final_snapshot().measure, reference);
}

double functional_error(const Trajectory& traj, const std::vector<TestFunction>& family) {
  const ProblemSpec& problem = *traj.problem;
  const double T = problem.horizon;
  const DiscreteMeasure& zeta = traj.final_snapshot().measure;
  double worst = 0.0;
  for (const TestFunction& phi : family) {
    const double norm = w1inf_norm(phi, T);
    if (norm == 0.0) continue;
    const double approx = integrate(zeta, [&](double x) { return eval_testfn(phi, x, T).value; });
    worst = std::max(worst, std::abs(approx - oracle_functional(problem, phi, T)) / norm);
  }
  return worst;
}

BoundCheck check_mass_bound(const Trajectory& traj) {
  const auto& bounds = traj.problem->rates.bounds;
  if (!bounds) throw ConfigError("mass bound needs declared rate bounds");
  const double p0 = traj.snapshots.front().measure.total_mass();
  BoundCheck c;
  for (const Snapshot& s : traj.snapshots) {
    const double rhs = p0 * std::exp(bounds->fecundity * s.t);
    const double lhs = s.measure.total_mass();
    const double ratio = rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? lhs / 1e-300 : 0.0);
    if (ratio > c.worst_ratio) {
      c.worst_ratio = ratio;
      c.worst_t = s.t;
    }
    if (lhs > rhs * (1.0 + 1e-8)) c.ok = false;
  }
  return c;
}

BoundCheck check_tail_bound(const Trajectory& traj) {
  const auto& bounds = traj.problem->rates.bounds;
  if (!bounds) throw ConfigError("tail bound needs declared rate bounds");
  const DiscreteMeasure& initial = traj.snapshots.front().measure;
  BoundCheck c;
  for (const Snapshot& s : traj.snapshots) {
    const double shift = s.t * bounds->growth;
    std::vector<double> probes;
    for (const Atom& a : s.measure.atoms()) probes.push_back(a.location);
    for (const Atom& a : initial.atoms()) probes.push_back(a.location + shift);
    for (double m : std::vector<double>(probes)) {
      probes.push_back(std::nextafter(m, -std::numeric_limits<double>::infinity()));
    }
    for (double m : probes) {
      const double lhs = tail_mass(s.measure, m);
      // Positions carry integrator round-off; allow it in the shifted edge.
      const double slack = 1e-10 * (1.0 + std::abs(m) + shift);
      const double rhs = tail_mass(initial, m - shift - slack);
      if (lhs > 0.0) {
        const double ratio = rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::infinity();
        if (ratio > c.worst_ratio) {
          c.worst_ratio = ratio;
          c.worst_t = s.t;
        }
      }
      if (lhs > rhs * (1.0 + 1e-12) + 1e-12) c.ok = false;
    }
  }
  return c;
}

BoundaryGrowth boundary_growth(const Trajectory& traj) {
  const auto& bounds = traj.problem->rates.bounds;
  if (!bounds) throw ConfigError("boundary growth bound needs declared rate bounds");
  BoundaryGrowth r;
  r.bound = 2.0 * bounds->growth;
  const double xb = traj.problem->birth_size;
  double since = 0.0;
  for (const Snapshot& s : traj.snapshots) {
    const CohortState& left = s.left_state();
    if (s.t > since) {
      r.measured_rate = std::max(r.measured_rate, (left.boundary.center - xb) / (s.t - since));
    }
    if (s.before_internalization) since = s.t;
  }
  return r;
}

std::optional<double> fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y,
                                       double floor, std::size_t min_points) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (x[i] > 0.0 && std::isfinite(y[i]) && y[i] >= floor) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < std::max<std::size_t>(min_points, 2)) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

ProblemSpec with_resolution(const ProblemSpec& problem, int cohorts, int internalizations) {
  ProblemSpec p = problem;
  p.initial_cohorts = cohorts;
  p.internalizations = internalizations;
  return p;
}

ReferenceKind parse_reference(std::string_view s) {
  if (s == "auto") return ReferenceKind::automatic;
  if (s == "self") return ReferenceKind::self;
  if (s == "functional") return ReferenceKind::functional;
  if (s == "both") return ReferenceKind::both;
  throw ConfigError("reference must be one of auto, self, functional, both; got '" +
                    std::string(s) + "'");
}

std::string_view to_string(ReferenceKind k) {
  switch (k) {
    case ReferenceKind::automatic: return "auto";
    case ReferenceKind::self: return "self";
    case ReferenceKind::functional: return "functional";
    case ReferenceKind::both: return "both";
  }
  return "auto";
}

const StudyRow* ConvergenceReport::find(int N, int n) const {
  for (const StudyRow& r : rows) {
    if (r.N == N && r.n == n) return &r;
  }
  return nullptr;
}

namespace {

void require_grid(const std::vector<int>& grid, const char* name) {
  if (grid.empty()) throw ConfigError(std::string(name) + " must not be empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 1) throw ConfigError(std::string(name) + " entries must be >= 1");
    if (i > 0 && grid[i] <= grid[i - 1]) {
      throw ConfigError(std::string(name) + " must be strictly increasing");
    }
  }
}

AxisSlopes fit_axis(const std::vector<const StudyRow*>& rows, bool along_N) {
  std::vector<double> x, flat, func, res;
  for (const StudyRow* r : rows) {
    if (!r->failure.empty()) continue;
    x.push_back(along_N ? r->N : r->n);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    flat.push_back(r->flat_error.value_or(nan));
    func.push_back(r->functional_error.value_or(nan));
    res.push_back(r->residual_norm.value_or(nan));
  }
  return {fit_loglog_slope(x, flat), fit_loglog_slope(x, func), fit_loglog_slope(x, res)};
}

}  // namespace

ConvergenceReport convergence_study(const ProblemSpec& problem, const StudyOptions& options) {
  require_grid(options.N_grid, "N_grid");
  require_grid(options.n_grid, "n_grid");
  if (options.reference_factor < 1) throw ConfigError("reference_factor must be >= 1");

  const bool has_oracle = problem.constant_rates.has_value();
  bool want_functional = false;
  bool want_self = false;
  switch (options.reference) {
    case ReferenceKind::automatic:
      want_functional = has_oracle;
      want_self = !has_oracle;
      break;
    case ReferenceKind::self: want_self = true; break;
    case ReferenceKind::functional: want_functional = true; break;
    case ReferenceKind::both:
      want_self = true;
      want_functional = true;
      break;
  }
  if (want_functional && !has_oracle) {
    throw ConfigError("functional reference needs a constant-coefficient model");
  }

  ConvergenceReport report;
  std::optional<DiscreteMeasure> reference;
  if (want_self) {
    try {
      const ProblemSpec fine =
          with_resolution(problem, options.N_grid.back() * options.reference_factor,
                          options.n_grid.back() * options.reference_factor);
      reference = run(fine, options.run).final_snapshot().measure;
    } catch (const std::exception& e) {
      report.reference_failure = e.what();
    }
  }
  const std::vector<TestFunction> family = standard_family(problem);

  for (int N : options.N_grid) {
    for (int n : options.n_grid) {
      StudyRow row;
      row.N = N;
      row.n = n;
      report.rows.push_back(row);
    }
  }

  auto evaluate = [&](StudyRow& row) {
    const auto start = std::chrono::steady_clock::now();
    try {
      const Trajectory traj = run(with_resolution(problem, row.N, row.n), options.run);
      row.h_eff = traj.step_size;
      if (reference) row.flat_error = flat_error(traj, *reference);
      if (want_functional) row.functional_error = functional_error(traj, family);
      row.residual_norm = residual_norm(traj, family);
      row.mass_bound_ok = check_mass_bound(traj).ok;
    } catch (const std::exception& e) {
      row.failure = e.what();
      row.mass_bound_ok = false;
    }
    row.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  unsigned workers = options.jobs ? options.jobs : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(report.rows.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < report.rows.size(); i = next++) evaluate(report.rows[i]);
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<const StudyRow*> along_N, along_n;
  for (const StudyRow& r : report.rows) {
    if (r.n == options.n_grid.back()) along_N.push_back(&r);
    if (r.N == options.N_grid.back()) along_n.push_back(&r);
  }
  report.slope_N = fit_axis(along_N, true);
  report.slope_n = fit_axis(along_n, false);
  return report;
}

}  // namespace ebt
