#include "ebt/residual.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ebt/errors.hpp"

namespace ebt {

namespace {

struct Bump {
  double value;
  double slope;  // d/ds
};

Bump bump(double s) {
  const double q = 1.0 - s * s;
  if (q <= 0.0) return {0.0, 0.0};
  const double v = std::exp(1.0 - 1.0 / q);
  return {v, v * (-2.0 * s / (q * q))};
}

// Cohort data at one quadrature node; atom 0 is the boundary cohort.
struct Node {
  double t = 0.0;
  std::vector<double> x, n, g, mu;
  double births = 0.0;
  // Original formulation: correction = a * phi_x(X_B) + b * phi(X_B).
  double corr_dx = 0.0;
  double corr_phi = 0.0;
};

using Piece = std::vector<Node>;

struct IntervalData {
  std::size_t first = 0;  // snapshot index of t1
  std::size_t last = 0;   // snapshot index of t2
  std::vector<Piece> pieces;
};

Node make_node(const CohortState& s, const ProblemSpec& problem) {
  Node node;
  node.t = s.t;
  const DiscreteMeasure env = assemble_measure(s);
  const VitalRates& r = problem.rates;
  for (const Atom& a : env.atoms()) {
    node.x.push_back(a.location);
    node.n.push_back(a.mass);
    node.g.push_back(r.growth(a.location, env));
    node.mu.push_back(r.mortality(a.location, env));
    node.births += r.fecundity(a.location, env) * a.mass;
  }
  if (s.formulation == BoundaryFormulation::original) {
    const double xb = s.birth_size;
    const double nb = node.n[0];
    const double center_rate = rhs(s, problem).boundary_center;
    const double mu_x =
        rate_derivative(r.mortality_dx, r.mortality, xb, env, derivative_step(xb));
    node.corr_dx = nb * (center_rate - node.g[0]);
    node.corr_phi = (node.mu[0] - r.mortality(xb, env)) * nb - mu_x * s.boundary_pi;
  }
  return node;
}

std::size_t snapshot_index(const Trajectory& traj, double t) {
  const auto i = traj.find(t);
  if (!i) {
    std::ostringstream os;
    os << "t = " << t << " is not a snapshot time";
    throw EvaluationError(os.str());
  }
  return *i;
}

IntervalData build_interval(const Trajectory& traj, double t1, double t2) {
  if (!(t1 < t2)) throw EvaluationError("residual needs t1 < t2");
  IntervalData d;
  d.first = snapshot_index(traj, t1);
  d.last = snapshot_index(traj, t2);
  const ProblemSpec& problem = *traj.problem;
  Piece piece;
  piece.push_back(make_node(traj.snapshots[d.first].state, problem));
  for (std::size_t i = d.first + 1; i <= d.last; ++i) {
    const Snapshot& s = traj.snapshots[i];
    piece.push_back(make_node(s.left_state(), problem));
    if (s.before_internalization && i < d.last) {
      d.pieces.push_back(std::move(piece));
      piece.clear();
      piece.push_back(make_node(s.state, problem));
    }
  }
  d.pieces.push_back(std::move(piece));
  return d;
}

double integrate_nu(const InitialData& nu, const TestFunction& phi, double t) {
  auto f = [&](double x) { return eval_testfn(phi, x, t).value; };
  if (const auto* m = std::get_if<DiscreteMeasure>(&nu)) return integrate(*m, f);
  return integrate_density(std::get<DensitySpec>(nu), f,
                           {phi.center - phi.half_width, phi.center + phi.half_width});
}

double integrate_measure(const DiscreteMeasure& m, const TestFunction& phi, double t) {
  return integrate(m, [&](double x) { return eval_testfn(phi, x, t).value; });
}

double quadrature_from(const Trajectory& traj, const IntervalData& d, const TestFunction& phi,
                       const InitialData& nu) {
  const double xb = traj.problem->birth_size;
  double flux = 0.0;
  for (const Piece& piece : d.pieces) {
    std::vector<double> ts, fs;
    for (const Node& node : piece) {
      double sum = 0.0;
      for (std::size_t k = 0; k < node.x.size(); ++k) {
        if (node.n[k] == 0.0) continue;
        const TestFunctionValue v = eval_testfn(phi, node.x[k], node.t);
        sum += node.n[k] * (v.d_dt + node.g[k] * v.d_dx - node.mu[k] * v.value);
      }
      sum += eval_testfn(phi, xb, node.t).value * node.births;
      ts.push_back(node.t);
      fs.push_back(sum);
    }
    flux += simpson(ts, fs);
  }
  const Snapshot& end = traj.snapshots[d.last];
  const double t2 = end.t;
  const double t1 = traj.snapshots[d.first].t;
  const double at_t2 = end.before_internalization
                           ? integrate_measure(assemble_measure(*end.before_internalization), phi, t2)
                           : integrate_measure(end.measure, phi, t2);
  return at_t2 - integrate_nu(nu, phi, t1) - flux;
}

double correction_from(const IntervalData& d, const TestFunction& phi) {
  double total = 0.0;
  for (const Piece& piece : d.pieces) {
    std::vector<double> ts, fs;
    for (const Node& node : piece) {
      const TestFunctionValue v = eval_testfn(phi, node.x[0], node.t);
      ts.push_back(node.t);
      fs.push_back(node.corr_dx * v.d_dx + node.corr_phi * v.value);
    }
    total += simpson(ts, fs);
  }
  return total;
}

double closed_form_from(const Trajectory& traj, const IntervalData& d, const TestFunction& phi,
                        const InitialData& nu) {
  const double xb = traj.problem->birth_size;
  const Piece& piece = d.pieces.front();
  std::vector<double> ts, fs;
  for (const Node& node : piece) {
    ts.push_back(node.t);
    fs.push_back((eval_testfn(phi, node.x[0], node.t).value - eval_testfn(phi, xb, node.t).value) *
                 node.births);
  }
  const Snapshot& start = traj.snapshots[d.first];
  double r = integrate_measure(start.measure, phi, start.t) - integrate_nu(nu, phi, start.t) +
             simpson(ts, fs);
  if (traj.problem->formulation == BoundaryFormulation::original) r += correction_from(d, phi);
  return r;
}

void require_no_event_inside(const Trajectory& traj, double t1, double t2) {
  const double tol = 1e-12 * std::max(1.0, traj.problem->horizon);
  for (double ti : traj.internalization_times) {
    if (ti > t1 + tol && ti < t2 - tol) {
      std::ostringstream os;
      os << "internalization at t = " << ti << " inside (" << t1 << ", " << t2 << ")";
      throw EvaluationError(os.str());
    }
  }
}

}  // namespace

TestFunctionValue eval_testfn(const TestFunction& phi, double x, double t) {
  const Bump b = bump((x - phi.center) / phi.half_width);
  if (b.value == 0.0) return {};
  double tau = 1.0;
  double dtau = 0.0;
  if (phi.window) {
    const Bump w = bump((t - phi.window->center) / phi.window->half_width);
    tau = w.value;
    dtau = w.slope / phi.window->half_width;
  }
  return {tau * b.value, tau * b.slope / phi.half_width, dtau * b.value};
}

double bump_slope_bound() {
  // Grid scan, then a golden-section refinement around the best grid point.
  static const double bound = [] {
    auto f = [](double s) { return std::abs(bump(s).slope); };
    double best = 0.0;
    double arg = 0.0;
    for (int i = 1; i < 10000; ++i) {
      const double s = i / 10000.0;
      if (f(s) > best) {
        best = f(s);
        arg = s;
      }
    }
    double lo = arg - 1e-4;
    double hi = arg + 1e-4;
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int i = 0; i < 100; ++i) {
      const double a = hi - r * (hi - lo);
      const double b = lo + r * (hi - lo);
      if (f(a) > f(b)) {
        hi = b;
      } else {
        lo = a;
      }
    }
    return std::max(best, f(0.5 * (lo + hi)));
  }();
  return bound;
}

double w1inf_norm(const TestFunction& phi, double t) {
  const double tau =
      phi.window ? bump((t - phi.window->center) / phi.window->half_width).value : 1.0;
  return std::abs(tau) * (1.0 + bump_slope_bound() / phi.half_width);
}

std::vector<TestFunction> standard_family(const ProblemSpec& problem) {
  if (!problem.rates.bounds) {
    throw ConfigError("standard_family needs declared growth bounds");
  }
  const double xb = problem.birth_size;
  const double T = problem.horizon;
  double init_hi = xb;
  if (const auto* m = std::get_if<DiscreteMeasure>(&problem.initial)) {
    if (!m->empty()) init_hi = std::max(init_hi, m->max_location());
  } else {
    init_hi = std::max(init_hi, std::get<DensitySpec>(problem.initial).hi);
  }
  double span = (init_hi - xb) + problem.rates.bounds->growth * T;
  if (!(span > 0.0)) span = 1.0;
  const double spacing = span / 7.0;

  std::vector<TestFunction> family;
  for (int k = 0; k < 8; ++k) {
    family.push_back({"bump" + std::to_string(k), xb + k * spacing, 1.5 * spacing, std::nullopt});
  }
  const TemporalWindow window{0.5 * T, 0.75 * T};
  family.push_back({"wave0", xb + span / 3.0, 0.5 * span, window});
  family.push_back({"wave1", xb + 2.0 * span / 3.0, 0.5 * span, window});
  return family;
}

double simpson(const std::vector<double>& t, const std::vector<double>& f) {
  const std::size_t n = t.size();
  if (n != f.size()) throw EvaluationError("simpson: size mismatch");
  if (n < 3) throw EvaluationError("simpson: need at least three nodes");
  double sum = 0.0;
  const std::size_t intervals = n - 1;
  const std::size_t paired = intervals - intervals % 2;
  for (std::size_t i = 0; i + 2 <= paired; i += 2) {
    const double h0 = t[i + 1] - t[i];
    const double h1 = t[i + 2] - t[i + 1];
    const double hs = h0 + h1;
    sum += hs / 6.0 *
           ((2.0 - h1 / h0) * f[i] + hs * hs / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]);
  }
  if (paired < intervals) {
    const double h0 = t[n - 2] - t[n - 3];
    const double h1 = t[n - 1] - t[n - 2];
    const double alpha = (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1));
    const double beta = (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0);
    const double eta = h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
    sum += alpha * f[n - 1] + beta * f[n - 2] - eta * f[n - 3];
  }
  return sum;
}

double residual_quadrature(const Trajectory& traj, const TestFunction& phi, double t1,
                           double t2, const InitialData& nu) {
  return quadrature_from(traj, build_interval(traj, t1, t2), phi, nu);
}

double residual_closed_form(const Trajectory& traj, const TestFunction& phi, double t1,
                            double t2, const InitialData& nu) {
  require_no_event_inside(traj, t1, t2);
  return closed_form_from(traj, build_interval(traj, t1, t2), phi, nu);
}

double boundary_correction(const Trajectory& traj, const TestFunction& phi, double t1,
                           double t2) {
  if (traj.problem->formulation != BoundaryFormulation::original) return 0.0;
  require_no_event_inside(traj, t1, t2);
  return correction_from(build_interval(traj, t1, t2), phi);
}

namespace {

struct Chain {
  std::vector<IntervalData> intervals;
  std::vector<InitialData> nus;
};

Chain build_chain(const Trajectory& traj) {
  Chain c;
  const std::vector<double> bounds = traj.interval_bounds();
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
    c.intervals.push_back(build_interval(traj, bounds[i], bounds[i + 1]));
    if (i == 0) {
      c.nus.push_back(traj.problem->initial);
    } else {
      c.nus.push_back(traj.snapshots[c.intervals.back().first].measure);
    }
  }
  return c;
}

double chained_sum(const Trajectory& traj, const Chain& c, const TestFunction& phi) {
  double r = 0.0;
  for (std::size_t i = 0; i < c.intervals.size(); ++i) {
    r += closed_form_from(traj, c.intervals[i], phi, c.nus[i]);
  }
  return r;
}

}  // namespace

double residual_chained(const Trajectory& traj, const TestFunction& phi) {
  return chained_sum(traj, build_chain(traj), phi);
}

double residual_norm(const Trajectory& traj, const std::vector<TestFunction>& family) {
  if (family.empty()) throw ConfigError("residual_norm needs a non-empty family");
  const Chain c = build_chain(traj);
  double worst = 0.0;
  for (const TestFunction& phi : family) {
    worst = std::max(worst, std::abs(chained_sum(traj, c, phi)));
  }
  return worst;
}

std::vector<ResidualRow> residual_table(const Trajectory& traj,
                                        const std::vector<TestFunction>& family) {
  const Chain c = build_chain(traj);
  const IntervalData whole = build_interval(traj, 0.0, traj.problem->horizon);
  std::vector<ResidualRow> rows;
  for (const TestFunction& phi : family) {
    for (std::size_t i = 0; i < c.intervals.size(); ++i) {
      const IntervalData& d = c.intervals[i];
      rows.push_back({phi.id, traj.snapshots[d.first].t, traj.snapshots[d.last].t,
                      quadrature_from(traj, d, phi, c.nus[i]),
                      closed_form_from(traj, d, phi, c.nus[i])});
    }
    rows.push_back({phi.id, 0.0, traj.problem->horizon,
                    quadrature_from(traj, whole, phi, traj.problem->initial),
                    chained_sum(traj, c, phi)});
  }
  return rows;
}

}  // namespace ebt
