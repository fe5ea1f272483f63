#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ebt/measures.hpp"
#include "ebt/model.hpp"
#include "ebt/residual.hpp"
#include "ebt/solver.hpp"

namespace ebt {

/// int phi(., T) d zeta_T for a feedback-free constant-coefficient problem,
/// solved along characteristics independently of the cohort scheme:
///
///   int phi(x0 + g0 T, T) e^{-mu0 T} d nu0(x0)
///   + int_0^T phi(x_b + g0 (T - s), T) e^{-mu0 (T - s)} beta0 P(s) ds,
///
/// P(s) = P(0) e^{(beta0 - mu0) s}. Adaptive Gauss-Kronrod, split where the
/// integrand leaves the bump support. Throws ConfigError when the problem has
/// no constant coefficients.
double oracle_functional(const ProblemSpec& problem, const TestFunction& phi, double T);

/// flat_distance(zeta_T, reference).
double flat_error(const Trajectory& traj, const DiscreteMeasure& reference);

/// max over the family of |int phi d zeta_T - oracle(phi)| / ||phi(., T)||.
/// A lower bound on the flat distance to the exact solution, never the metric
/// itself.
double functional_error(const Trajectory& traj, const std::vector<TestFunction>& family);

struct BoundCheck {
  bool ok = true;
  /// Largest lhs / rhs seen (0 when every lhs is 0).
  double worst_ratio = 0.0;
  double worst_t = 0.0;
};

/// total_mass(zeta_t) <= total_mass(zeta_0) exp(beta_sup t) (1 + 1e-8) at
/// every snapshot. Needs declared bounds.
BoundCheck check_mass_bound(const Trajectory& traj);

/// tail_mass(zeta_t, M) <= tail_mass(zeta_0, M - t g_sup) (+1e-12 absolute)
/// at every snapshot, probing M at every atom location of zeta_t and of the
/// shifted zeta_0, each also nudged just below. Meaningful for beta = 0 only.
BoundCheck check_tail_bound(const Trajectory& traj);

/// Linear-growth check on the boundary cohort: the largest
/// (X_B(t) - x_b) / (t - t_i) over snapshots strictly after each
/// internalization (t_0 = 0), against C = 2 g_sup.
struct BoundaryGrowth {
  double measured_rate = 0.0;
  double bound = 0.0;
  bool ok() const { return measured_rate <= bound * (1.0 + 1e-12); }
};
BoundaryGrowth boundary_growth(const Trajectory& traj);

/// Least-squares slope of log y against log x over points with y >= floor.
/// Empty with fewer than `min_points` usable points.
std::optional<double> fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y,
                                       double floor = 1e-9, std::size_t min_points = 3);

/// Copy of `problem` with N and n replaced.
ProblemSpec with_resolution(const ProblemSpec& problem, int cohorts, int internalizations);

enum class ReferenceKind {
  automatic,   // functional oracle when available, else self reference
  self,        // fine-resolution run only
  functional,  // oracle only
  both,
};

ReferenceKind parse_reference(std::string_view s);
std::string_view to_string(ReferenceKind k);

struct StudyOptions {
  std::vector<int> N_grid;
  std::vector<int> n_grid;
  RunOptions run;
  ReferenceKind reference = ReferenceKind::automatic;
  /// Self reference resolution factor applied to max(N_grid), max(n_grid).
  int reference_factor = 4;
  /// Worker threads; 0 means hardware concurrency.
  unsigned jobs = 0;
};

struct StudyRow {
  int N = 0;
  int n = 0;
  double h_eff = 0.0;
  std::optional<double> flat_error;
  std::optional<double> functional_error;
  std::optional<double> residual_norm;
  bool mass_bound_ok = false;
  double runtime_s = 0.0;
  /// Non-empty when the row's run or evaluation failed.
  std::string failure;
};

struct AxisSlopes {
  std::optional<double> flat_error;
  std::optional<double> functional_error;
  std::optional<double> residual_norm;
};

struct ConvergenceReport {
  std::vector<StudyRow> rows;  // N-major, both grids ascending
  AxisSlopes slope_N;          // n held at max(n_grid)
  AxisSlopes slope_n;          // N held at max(N_grid)
  std::string reference_failure;

  const StudyRow* find(int N, int n) const;
};

/// Runs every (N, n) pair on a worker pool. Row order is deterministic and
/// independent of completion order; a failing row is recorded and the study
/// continues. Throws ConfigError for empty or unsorted grids.
ConvergenceReport convergence_study(const ProblemSpec& problem, const StudyOptions& options);

}  // namespace ebt
