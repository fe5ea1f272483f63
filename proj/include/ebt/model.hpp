#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ebt/density.hpp"
#include "ebt/measures.hpp"

namespace ebt {

/// A vital rate f(x, env). The environment is the current solution measure;
/// feedback models reduce it (e.g. to total mass). Must be pure.
using RateFn = std::function<double(double x, const DiscreteMeasure& env)>;

struct RateBounds {
  double growth = 0.0;
  double mortality = 0.0;
  double fecundity = 0.0;
};

/// Constants C with sup_x |f(x, a) - f(x, b)| <= C * flat_distance(a, b).
struct FeedbackLipschitz {
  double growth = 0.0;
  double mortality = 0.0;
  double fecundity = 0.0;
};

struct VitalRates {
  RateFn growth;
  RateFn mortality;
  RateFn fecundity;
  /// d/dx of growth and mortality; needed by the original boundary cohort.
  /// When absent the solver uses central differences.
  RateFn growth_dx;
  RateFn mortality_dx;
  std::optional<RateBounds> bounds;
  std::optional<FeedbackLipschitz> lipschitz;
};

/// Step used when an x-derivative has to be differenced: 1e-6 * max(1, |x_b|).
double derivative_step(double birth_size);

/// exact(x, env) when provided, else a second-order forward difference of f with `step`.
double rate_derivative(const RateFn& exact, const RateFn& f, double x,
                       const DiscreteMeasure& env, double step);

enum class BoundaryFormulation { simplified, original };

std::string_view to_string(BoundaryFormulation f);
BoundaryFormulation parse_formulation(std::string_view s);

using InitialData = std::variant<DiscreteMeasure, DensitySpec>;

double initial_mass(const InitialData& data);

/// Present for feedback-free models with x-independent rates; enables the
/// closed-form oracle.
struct ConstantCoefficients {
  double growth = 0.0;
  double mortality = 0.0;
  double fecundity = 0.0;
};

struct ProblemSpec {
  std::string model;
  std::map<std::string, double> params;
  double birth_size = 0.0;
  double horizon = 1.0;
  VitalRates rates;
  InitialData initial = DiscreteMeasure{};
  BoundaryFormulation formulation = BoundaryFormulation::simplified;
  int internalizations = 1;  // n: boundary cohort internalized at t_i = i T / n
  int initial_cohorts = 1;   // N
  std::optional<ConstantCoefficients> constant_rates;

  /// Throws ConfigError when T <= 0, n < 1, N < 1, a rate is missing, or the
  /// initial data reaches below the birth size.
  void validate() const;
};

/// Everything a catalog model needs besides its rate parameters.
struct ProblemSetup {
  double birth_size = 0.0;
  double horizon = 1.0;
  int initial_cohorts = 1;
  int internalizations = 1;
  BoundaryFormulation formulation = BoundaryFormulation::simplified;
  InitialData initial = DiscreteMeasure{};
};

/// Built-in models:
///   pure_decay        mu0                  g = 0, beta = 0, mu = mu0
///   pure_transport    g0                   g = g0, mu = beta = 0
///   constant_rates    g0 mu0 beta0         constants, no feedback
///   ramp_fecundity    g0 mu0 beta0 x_ramp ramp_width [growth_decay]
///                     beta = beta0 / (1 + exp(-(x - x_ramp) / ramp_width)),
///                     g = g0 exp(-growth_decay (x - x_b))
///   logistic_feedback g0 mu0 mu1 beta0     mu = mu0 + mu1 * total_mass(env)
/// Derivatives, declared bounds and feedback Lipschitz constants are filled in.
/// Throws ConfigError for unknown names, unknown/missing parameters or values
/// out of range.
ProblemSpec catalog_build(std::string_view name, const std::map<std::string, double>& params,
                          const ProblemSetup& setup);

std::vector<std::string> catalog_names();

struct RateViolation {
  std::string kind;  // non_finite | negative | exceeds_bound | feedback_lipschitz
  std::string rate;  // growth | mortality | fecundity
  double x = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<RateViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Sampled consistency check of the rate assumptions on `points` evenly spaced
/// sizes in [x_lo, x_hi] against every probe measure: finite, non-negative,
/// within declared bounds, and the declared feedback Lipschitz inequality on
/// every unordered pair of probes. A consistent report is evidence at the
/// sampled points only. Never throws on bad rate values; they are reported.
ValidationReport validate_rates(const VitalRates& rates, double x_lo, double x_hi,
                                const std::vector<DiscreteMeasure>& probes, int points = 100);

}  // namespace ebt
