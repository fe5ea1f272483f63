#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "ebt/measures.hpp"
#include "ebt/model.hpp"

namespace ebt {

/// One cohort: `abundance` individuals with mean state `center`. Indices are
/// stable identifiers; the boundary cohort always has the lowest index.
struct Cohort {
  int index = 0;
  double abundance = 0.0;
  double center = 0.0;
};

struct CohortState {
  double t = 0.0;
  BoundaryFormulation formulation = BoundaryFormulation::simplified;
  double birth_size = 0.0;
  /// Under the original formulation `boundary.center` is the reported
  /// pi / N + x_b (x_b when pi == 0) and is kept in sync with `boundary_pi`.
  Cohort boundary;
  double boundary_pi = 0.0;
  /// Ascending index; every index is greater than boundary.index.
  std::vector<Cohort> internal;

  std::size_t cohort_count() const { return internal.size() + 1; }
};

/// Center of the original-formulation boundary cohort from (pi, N).
/// Throws NumericalError for pi > 0 with N <= 0, which the dynamics never
/// reach from N = pi = 0.
double boundary_center_from_pi(double pi, double abundance, double birth_size);

/// Time derivative of every CohortState field.
struct StateDerivative {
  double boundary_abundance = 0.0;
  /// dX_B/dt. Under the original formulation this is the quotient-rule
  /// derivative of pi / N (0 while pi == 0).
  double boundary_center = 0.0;
  double boundary_pi = 0.0;  // original formulation only
  std::vector<double> internal_abundance;
  std::vector<double> internal_center;
  /// Total offspring production sum_i beta(X_i) N_i, boundary included.
  double birth_flux = 0.0;
};

/// Internal cohorts: dN/dt = -mu(X) N, dX/dt = g(X).
/// Simplified boundary: dN/dt = -mu(X_B) N_B + births, dX_B/dt = g(X_B).
/// Original boundary: dN/dt = -mu(x_b) N_B - mu_x(x_b) pi + births,
///                    dpi/dt = g(x_b) N_B + g_x(x_b) pi - mu(x_b) pi.
/// All rates see the measure assembled from `state`. Throws NumericalError on
/// a non-finite rate.
StateDerivative rhs(const CohortState& state, const ProblemSpec& problem);

/// One atom per cohort, zero-mass atoms included.
DiscreteMeasure assemble_measure(const CohortState& state);

/// N internal cohorts (indices 1..N) and an empty boundary cohort 0 at x_b.
/// Densities are split into N equal-mass quantile cells located at the cell
/// mean. Atomic data with at most N atoms is copied verbatim and padded with
/// zero-mass cohorts at x_b; larger atomic data is split into N equal-mass
/// cells of the sorted atoms.
CohortState init_cohorts(const InitialData& initial, int cohorts, double birth_size,
                         BoundaryFormulation formulation = BoundaryFormulation::simplified);
CohortState init_cohorts(const ProblemSpec& problem);

/// The boundary cohort becomes internal with its current (N, X); a new empty
/// boundary cohort with index B - 1 starts at x_b.
CohortState internalize(const CohortState& state);

struct PruneResult {
  CohortState state;
  double removed_mass = 0.0;
  int removed_count = 0;
};

/// Drops internal cohorts with N < epsilon. The boundary cohort is kept.
PruneResult prune(const CohortState& state, double epsilon);

struct Snapshot {
  double t = 0.0;
  CohortState state;
  DiscreteMeasure measure;
  /// At internalization times: the state just before internalize/prune.
  std::optional<CohortState> before_internalization;

  /// State as seen by the interval ending at t.
  const CohortState& left_state() const {
    return before_internalization ? *before_internalization : state;
  }
};

struct RunOptions {
  double step_size = 1e-3;
  double prune_epsilon = 0.0;
  int snapshot_stride = 1;
};

struct Trajectory {
  std::shared_ptr<const ProblemSpec> problem;
  double step_size = 0.0;  // h_eff
  int steps_per_interval = 0;
  std::vector<double> internalization_times;
  std::vector<Snapshot> snapshots;
  double pruned_mass = 0.0;
  int pruned_count = 0;

  const Snapshot& final_snapshot() const { return snapshots.back(); }
  /// Index of the snapshot at time t (within 1e-12 T); nullopt if none.
  std::optional<std::size_t> find(double t) const;
  /// Interval boundaries 0, t_1, ..., t_{n-1}, T.
  std::vector<double> interval_bounds() const;
};

/// Effective step (T/n) / ceil((T/n) / h).
double effective_step(double horizon, int internalizations, double h);

/// Classical RK4 with the step adjusted to an integer count per
/// internalization interval. The boundary cohort is internalized at
/// t_i = i T / n for i = 1..n-1 (an internalization at T would not change the
/// measure), followed by pruning. Snapshots: t = 0, every `snapshot_stride`
/// steps, every t_i and T.
/// Throws ConfigError on bad options and NumericalError when a rate is
/// non-finite or an abundance drops below -1e-12.
Trajectory run(std::shared_ptr<const ProblemSpec> problem, const RunOptions& options);
Trajectory run(const ProblemSpec& problem, const RunOptions& options);

}  // namespace ebt
