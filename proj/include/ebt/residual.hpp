#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ebt/model.hpp"
#include "ebt/solver.hpp"

namespace ebt {

/// Smooth window tau(t) = psi((t - center) / half_width), psi(0) = 1.
struct TemporalWindow {
  double center = 0.0;
  double half_width = 1.0;
};

/// phi(x, t) = tau(t) * psi((x - center) / half_width) with
/// psi(s) = exp(1 - 1 / (1 - s^2)) on |s| < 1 and 0 elsewhere, so phi = 1 at
/// the center. tau == 1 when `window` is empty.
struct TestFunction {
  std::string id;
  double center = 0.0;
  double half_width = 1.0;
  std::optional<TemporalWindow> window;
};

struct TestFunctionValue {
  double value = 0.0;
  double d_dx = 0.0;
  double d_dt = 0.0;
};

TestFunctionValue eval_testfn(const TestFunction& phi, double x, double t);

/// max |psi'| over the reference bump.
double bump_slope_bound();

/// ||phi(., t)||_inf + ||d/dx phi(., t)||_inf.
double w1inf_norm(const TestFunction& phi, double t);

/// Ten functions: eight time-flat bumps with centers evenly spaced over
/// [x_b, x_hi], x_hi = max(initial support) + g_sup T, and half-width 1.5x the
/// spacing; plus two wider bumps at one and two thirds of the span with a
/// temporal window centred at T/2 (half-width 0.75 T). Requires declared
/// growth bounds.
std::vector<TestFunction> standard_family(const ProblemSpec& problem);

/// Composite Simpson over possibly uneven nodes; an odd interval count closes
/// with a quadratic through the last three nodes. Throws EvaluationError with
/// fewer than three nodes.
double simpson(const std::vector<double>& t, const std::vector<double>& f);

/// Weak-form residual by direct quadrature:
///
///   R = int phi(., t2) d zeta_t2 - int phi(., t1) d nu
///       - int_t1^t2 int (phi_t + g phi_x - mu phi) d zeta_t dt
///       - int_t1^t2 phi(x_b, t) sum_i beta(X_i) N_i dt.
///
/// The birth term enters once, weighted by phi(x_b, t). Time integrals are
/// split at internalization times; each piece uses the post-event state at
/// its left end and the pre-event state at its right end. zeta_t2 is the
/// measure just before any event at t2. Throws EvaluationError when t1 or t2
/// is not a snapshot time or a piece has fewer than three snapshots.
double residual_quadrature(const Trajectory& traj, const TestFunction& phi, double t1,
                           double t2, const InitialData& nu);

/// Same quantity from the cohort dynamics, valid when no internalization
/// falls strictly inside (t1, t2):
///
///   R = int phi(., t1) d zeta_t1 - int phi(., t1) d nu
///       + int_t1^t2 (phi(X_B, t) - phi(x_b, t)) sum_i beta(X_i) N_i dt
///       + correction,
///
/// with the correction (original formulation only, see boundary_correction).
double residual_closed_form(const Trajectory& traj, const TestFunction& phi, double t1,
                            double t2, const InitialData& nu);

/// Original-formulation boundary term
///
///   int_t1^t2 N_B (X_B' - g(X_B)) phi_x(X_B, t)
///             + [(mu(X_B) - mu(x_b)) N_B - mu_x(x_b) pi_B] phi(X_B, t) dt,
///
/// with X_B' from the quotient rule on (pi_B, N_B). Zero under the simplified
/// formulation.
double boundary_correction(const Trajectory& traj, const TestFunction& phi, double t1,
                           double t2);

struct ResidualRow {
  std::string phi_id;
  double t1 = 0.0;
  double t2 = 0.0;
  double quadrature = 0.0;
  double closed_form = 0.0;
};

/// Closed form summed over [0, t_1], [t_1, t_2], ..., [t_{n-1}, T] with
/// nu = problem initial data first and zeta_{t_i} afterwards.
double residual_chained(const Trajectory& traj, const TestFunction& phi);

/// max over the family of |residual_chained|. Throws ConfigError on an empty
/// family.
double residual_norm(const Trajectory& traj, const std::vector<TestFunction>& family);

/// Per-interval rows (chained nu) followed by one whole-horizon row per
/// function whose closed_form column is the chained sum.
std::vector<ResidualRow> residual_table(const Trajectory& traj,
                                        const std::vector<TestFunction>& family);

}  // namespace ebt
