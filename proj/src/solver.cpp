#include "ebt/solver.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <sstream>
#include <span>

#include "ebt/errors.hpp"

namespace ebt {

namespace {

constexpr double kNegativeTolerance = 1e-12;

// Flat layout used by the integrator:
//   y[0] = N_B, y[1] = X_B (simplified) or pi_B (original),
//   y[2 + 2i] = N_i, y[3 + 2i] = X_i for internal cohort i.
std::vector<double> flatten(const CohortState& s) {
  std::vector<double> y(2 + 2 * s.internal.size());
  y[0] = s.boundary.abundance;
  y[1] = s.formulation == BoundaryFormulation::original ? s.boundary_pi : s.boundary.center;
  for (std::size_t i = 0; i < s.internal.size(); ++i) {
    y[2 + 2 * i] = s.internal[i].abundance;
    y[3 + 2 * i] = s.internal[i].center;
  }
  return y;
}

void unflatten(std::span<const double> y, CohortState& s) {
  s.boundary.abundance = y[0];
  if (s.formulation == BoundaryFormulation::original) {
    s.boundary_pi = y[1];
    s.boundary.center = boundary_center_from_pi(y[1], y[0], s.birth_size);
  } else {
    s.boundary.center = y[1];
  }
  for (std::size_t i = 0; i < s.internal.size(); ++i) {
    s.internal[i].abundance = y[2 + 2 * i];
    s.internal[i].center = y[3 + 2 * i];
  }
}

[[noreturn]] void abort_non_finite(const char* what, int index, double x, double t) {
  std::ostringstream os;
  os << what << " is non-finite for cohort " << index << " at x = " << x << ", t = " << t;
  throw NumericalError(os.str());
}

double checked_abundance(double n, int index, double t) {
  if (n >= 0.0) return n;
  if (n >= -kNegativeTolerance) return 0.0;
  std::ostringstream os;
  os << "abundance of cohort " << index << " fell to " << n << " at t = " << t;
  throw NumericalError(os.str());
}

struct Evaluator {
  const ProblemSpec& problem;
  const CohortState& shape;  // indices and formulation; values come from y

  double boundary_location(std::span<const double> y) const {
    if (shape.formulation == BoundaryFormulation::original) {
      return boundary_center_from_pi(y[1], y[0], shape.birth_size);
    }
    return y[1];
  }

  DiscreteMeasure environment(std::span<const double> y, double t) const {
    std::vector<Atom> atoms;
    atoms.reserve(shape.cohort_count());
    atoms.push_back({boundary_location(y), checked_abundance(y[0], shape.boundary.index, t)});
    for (std::size_t i = 0; i < shape.internal.size(); ++i) {
      atoms.push_back(
          {y[3 + 2 * i], checked_abundance(y[2 + 2 * i], shape.internal[i].index, t)});
    }
    return DiscreteMeasure(std::move(atoms));
  }

  // Fills dy (same layout as y) and returns {dX_B/dt, births}.
  std::pair<double, double> operator()(std::span<const double> y, std::span<double> dy,
                                       double t) const {
    const DiscreteMeasure env = environment(y, t);
    const VitalRates& r = problem.rates;
    const double xb = shape.birth_size;

    auto eval = [&](const RateFn& f, const char* name, double x, int index) {
      const double v = f(x, env);
      if (!std::isfinite(v)) abort_non_finite(name, index, x, t);
      return v;
    };

    double births = 0.0;
    const auto atoms = env.atoms();
    for (std::size_t i = 1; i < atoms.size(); ++i) {
      const int index = shape.internal[i - 1].index;
      const double x = atoms[i].location;
      const double n = atoms[i].mass;
      const double mu = eval(r.mortality, "mortality", x, index);
      const double g = eval(r.growth, "growth", x, index);
      const double beta = eval(r.fecundity, "fecundity", x, index);
      dy[2 + 2 * (i - 1)] = -mu * n;
      dy[3 + 2 * (i - 1)] = g;
      births += beta * n;
    }

    const int bi = shape.boundary.index;
    const double nb = atoms[0].mass;
    const double xb_loc = atoms[0].location;
    births += eval(r.fecundity, "fecundity", xb_loc, bi) * nb;

    if (shape.formulation == BoundaryFormulation::simplified) {
      dy[0] = -eval(r.mortality, "mortality", xb_loc, bi) * nb + births;
      dy[1] = eval(r.growth, "growth", xb_loc, bi);
      return {dy[1], births};
    }

    const double pi = y[1];
    const double fd = derivative_step(xb);
    auto dx = [&](const RateFn& exact, const RateFn& f, const char* name) {
      const double v = rate_derivative(exact, f, xb, env, fd);
      if (!std::isfinite(v)) abort_non_finite(name, bi, xb, t);
      return v;
    };
    const double mu = eval(r.mortality, "mortality", xb, bi);
    const double g = eval(r.growth, "growth", xb, bi);
    const double mu_x = dx(r.mortality_dx, r.mortality, "mortality derivative");
    const double g_x = dx(r.growth_dx, r.growth, "growth derivative");
    dy[0] = -mu * nb - mu_x * pi + births;
    dy[1] = g * nb + g_x * pi - mu * pi;
    double center_rate = 0.0;
    if (pi > 0.0) {
      center_rate = (dy[1] - (xb_loc - xb) * dy[0]) / nb;
    }
    return {center_rate, births};
  }
};

void rk4_step(const Evaluator& f, std::vector<double>& y, double t, double h) {
  const std::size_t n = y.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  f(y, k1, t);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  f(tmp, k2, t + 0.5 * h);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  f(tmp, k3, t + 0.5 * h);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
  f(tmp, k4, t + h);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

// Clamps microscopic negatives produced by the arithmetic; aborts beyond.
void guard(std::vector<double>& y, const CohortState& shape, double t) {
  y[0] = checked_abundance(y[0], shape.boundary.index, t);
  if (shape.formulation == BoundaryFormulation::original) {
    y[1] = checked_abundance(y[1], shape.boundary.index, t);
  }
  for (std::size_t i = 0; i < shape.internal.size(); ++i) {
    y[2 + 2 * i] = checked_abundance(y[2 + 2 * i], shape.internal[i].index, t);
  }
  for (double v : y) {
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "state became non-finite at t = " << t;
      throw NumericalError(os.str());
    }
  }
}

std::vector<Cohort> quantile_cells_of_atoms(const DiscreteMeasure& m, int cells) {
  std::vector<Atom> atoms(m.atoms().begin(), m.atoms().end());
  std::stable_sort(atoms.begin(), atoms.end(),
                   [](const Atom& a, const Atom& b) { return a.location < b.location; });
  const double cell_mass = m.total_mass() / cells;
  std::vector<Cohort> out;
  std::size_t k = 0;
  double left_in_atom = atoms.empty() ? 0.0 : atoms[0].mass;
  for (int c = 0; c < cells; ++c) {
    double need = cell_mass;
    double moment = 0.0;
    double got = 0.0;
    while (k < atoms.size() && (need > 0.0 || c == cells - 1)) {
      const double take = (c == cells - 1) ? left_in_atom : std::min(need, left_in_atom);
      moment += take * atoms[k].location;
      got += take;
      need -= take;
      left_in_atom -= take;
      if (left_in_atom <= 0.0) {
        ++k;
        left_in_atom = k < atoms.size() ? atoms[k].mass : 0.0;
      }
    }
    const double center = got > 0.0 ? moment / got : atoms.back().location;
    out.push_back({c + 1, cell_mass, center});
  }
  return out;
}

std::vector<Cohort> quantile_cells_of_density(const DensitySpec& d, int cells,
                                              double birth_size) {
  const double mass = density_mass(d);
  const double cell_mass = mass / cells;
  std::vector<Cohort> out;
  if (mass <= 0.0) {
    for (int c = 0; c < cells; ++c) out.push_back({c + 1, 0.0, birth_size});
    return out;
  }
  auto cdf = [&](double x) {
    std::vector<double> breaks;
    for (double k : d.kinks) {
      if (k < x) breaks.push_back(k);
    }
    return quadrature(d.pdf, d.lo, x, breaks);
  };
  std::vector<double> q(cells + 1);
  q[0] = d.lo;
  q[cells] = d.hi;
  for (int c = 1; c < cells; ++c) {
    const double target = mass * c / cells;
    boost::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(
        [&](double x) { return cdf(x) - target; }, q[c - 1], d.hi, cdf(q[c - 1]) - target,
        mass - target, boost::math::tools::eps_tolerance<double>(52), iters);
    q[c] = 0.5 * (r.first + r.second);
  }
  for (int c = 0; c < cells; ++c) {
    std::vector<double> breaks;
    for (double k : d.kinks) {
      if (k > q[c] && k < q[c + 1]) breaks.push_back(k);
    }
    const double m0 = quadrature(d.pdf, q[c], q[c + 1], breaks);
    const double m1 = quadrature([&](double x) { return x * d.pdf(x); }, q[c], q[c + 1], breaks);
    const double center = m0 > 0.0 ? m1 / m0 : 0.5 * (q[c] + q[c + 1]);
    out.push_back({c + 1, cell_mass, std::clamp(center, q[c], q[c + 1])});
  }
  return out;
}

}  // namespace

double boundary_center_from_pi(double pi, double abundance, double birth_size) {
  if (pi > 0.0) {
    if (!(abundance > 0.0)) {
      std::ostringstream os;
      os << "boundary cohort has pi = " << pi << " but N = " << abundance;
      throw NumericalError(os.str());
    }
    return pi / abundance + birth_size;
  }
  return birth_size;
}

StateDerivative rhs(const CohortState& state, const ProblemSpec& problem) {
  const std::vector<double> y = flatten(state);
  std::vector<double> dy(y.size());
  const Evaluator f{problem, state};
  const auto [center_rate, births] = f(y, dy, state.t);
  StateDerivative d;
  d.boundary_abundance = dy[0];
  d.boundary_center = center_rate;
  if (state.formulation == BoundaryFormulation::original) d.boundary_pi = dy[1];
  d.internal_abundance.resize(state.internal.size());
  d.internal_center.resize(state.internal.size());
  for (std::size_t i = 0; i < state.internal.size(); ++i) {
    d.internal_abundance[i] = dy[2 + 2 * i];
    d.internal_center[i] = dy[3 + 2 * i];
  }
  d.birth_flux = births;
  return d;
}

DiscreteMeasure assemble_measure(const CohortState& state) {
  std::vector<Atom> atoms;
  atoms.reserve(state.cohort_count());
  const double xb = state.formulation == BoundaryFormulation::original
                        ? boundary_center_from_pi(state.boundary_pi, state.boundary.abundance,
                                                  state.birth_size)
                        : state.boundary.center;
  atoms.push_back({xb, state.boundary.abundance});
  for (const Cohort& c : state.internal) atoms.push_back({c.center, c.abundance});
  return DiscreteMeasure(std::move(atoms));
}

CohortState init_cohorts(const InitialData& initial, int cohorts, double birth_size,
                         BoundaryFormulation formulation) {
  if (cohorts < 1) throw ConfigError("init_cohorts: N must be >= 1");
  CohortState s;
  s.formulation = formulation;
  s.birth_size = birth_size;
  s.boundary = {0, 0.0, birth_size};
  s.boundary_pi = 0.0;
  if (const auto* m = std::get_if<DiscreteMeasure>(&initial)) {
    if (m->size() <= static_cast<std::size_t>(cohorts)) {
      const auto atoms = m->atoms();
      for (int i = 0; i < cohorts; ++i) {
        if (static_cast<std::size_t>(i) < atoms.size()) {
          s.internal.push_back({i + 1, atoms[i].mass, atoms[i].location});
        } else {
          s.internal.push_back({i + 1, 0.0, birth_size});
        }
      }
    } else {
      s.internal = quantile_cells_of_atoms(*m, cohorts);
    }
  } else {
    s.internal = quantile_cells_of_density(std::get<DensitySpec>(initial), cohorts, birth_size);
  }
  return s;
}

CohortState init_cohorts(const ProblemSpec& problem) {
  return init_cohorts(problem.initial, problem.initial_cohorts, problem.birth_size,
                      problem.formulation);
}

CohortState internalize(const CohortState& state) {
  CohortState next = state;
  Cohort old = state.boundary;
  if (state.formulation == BoundaryFormulation::original) {
    old.center =
        boundary_center_from_pi(state.boundary_pi, state.boundary.abundance, state.birth_size);
  }
  next.internal.insert(next.internal.begin(), old);
  next.boundary = {state.boundary.index - 1, 0.0, state.birth_size};
  next.boundary_pi = 0.0;
  return next;
}

PruneResult prune(const CohortState& state, double epsilon) {
  if (epsilon < 0.0) throw ConfigError("prune: epsilon must be >= 0");
  PruneResult r{state, 0.0, 0};
  if (epsilon == 0.0) return r;
  auto& cs = r.state.internal;
  std::vector<Cohort> kept;
  kept.reserve(cs.size());
  for (const Cohort& c : cs) {
    if (c.abundance < epsilon) {
      r.removed_mass += c.abundance;
      ++r.removed_count;
    } else {
      kept.push_back(c);
    }
  }
  cs = std::move(kept);
  return r;
}

std::optional<std::size_t> Trajectory::find(double t) const {
  const double tol = 1e-12 * std::max(1.0, problem ? problem->horizon : 1.0);
  auto it = std::lower_bound(snapshots.begin(), snapshots.end(), t - tol,
                             [](const Snapshot& s, double v) { return s.t < v; });
  if (it != snapshots.end() && std::abs(it->t - t) <= tol) {
    return static_cast<std::size_t>(it - snapshots.begin());
  }
  return std::nullopt;
}

std::vector<double> Trajectory::interval_bounds() const {
  std::vector<double> b{0.0};
  b.insert(b.end(), internalization_times.begin(), internalization_times.end());
  b.push_back(problem->horizon);
  return b;
}

double effective_step(double horizon, int internalizations, double h) {
  const double interval = horizon / internalizations;
  const double ratio = interval / h;
  // Guard against ratios like 100.00000000000001 from decimal inputs.
  double steps = std::ceil(ratio);
  if (steps - ratio > 1.0 - 1e-9) steps -= 1.0;
  return interval / std::max(1.0, steps);
}

Trajectory run(std::shared_ptr<const ProblemSpec> problem, const RunOptions& options) {
  problem->validate();
  if (!(options.step_size > 0.0) || !std::isfinite(options.step_size)) {
    throw ConfigError("step size must be > 0");
  }
  if (options.snapshot_stride < 1) throw ConfigError("snapshot_stride must be >= 1");
  if (options.prune_epsilon < 0.0) throw ConfigError("prune_epsilon must be >= 0");

  const double T = problem->horizon;
  const int n = problem->internalizations;
  const double h = effective_step(T, n, options.step_size);
  const int m = static_cast<int>(std::llround((T / n) / h));

  Trajectory traj;
  traj.problem = problem;
  traj.step_size = h;
  traj.steps_per_interval = m;

  CohortState state = init_cohorts(*problem);
  traj.snapshots.push_back({0.0, state, assemble_measure(state), std::nullopt});

  long step_count = 0;
  for (int i = 0; i < n; ++i) {
    const double t0 = T * i / n;
    const double t1 = T * (i + 1) / n;
    std::vector<double> y = flatten(state);
    const Evaluator f{*problem, state};
    for (int j = 1; j <= m; ++j) {
      const double t_next = (j == m) ? t1 : t0 + j * h;
      rk4_step(f, y, state.t, t_next - state.t);
      guard(y, state, t_next);
      unflatten(y, state);
      state.t = t_next;
      ++step_count;
      if (j < m && step_count % options.snapshot_stride == 0) {
        traj.snapshots.push_back({state.t, state, assemble_measure(state), std::nullopt});
      }
    }
    if (i + 1 < n) {
      CohortState before = state;
      PruneResult pr = prune(internalize(state), options.prune_epsilon);
      traj.pruned_mass += pr.removed_mass;
      traj.pruned_count += pr.removed_count;
      state = std::move(pr.state);
      traj.internalization_times.push_back(t1);
      traj.snapshots.push_back({t1, state, assemble_measure(state), std::move(before)});
    } else {
      traj.snapshots.push_back({t1, state, assemble_measure(state), std::nullopt});
    }
  }
  return traj;
}

Trajectory run(const ProblemSpec& problem, const RunOptions& options) {
  return run(std::make_shared<const ProblemSpec>(problem), options);
}

}  // namespace ebt
