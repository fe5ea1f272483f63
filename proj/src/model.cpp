#include "ebt/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "ebt/errors.hpp"

namespace ebt {

double derivative_step(double birth_size) { return 1e-6 * std::max(1.0, std::abs(birth_size)); }

double rate_derivative(const RateFn& exact, const RateFn& f, double x,
                       const DiscreteMeasure& env, double step) {
  if (exact) return exact(x, env);
  // Forward stencil: sizes live on [x_b, inf), and rates may kink at x_b.
  return (-3.0 * f(x, env) + 4.0 * f(x + step, env) - f(x + 2.0 * step, env)) / (2.0 * step);
}

std::string_view to_string(BoundaryFormulation f) {
  return f == BoundaryFormulation::simplified ? "simplified" : "original";
}

BoundaryFormulation parse_formulation(std::string_view s) {
  if (s == "simplified") return BoundaryFormulation::simplified;
  if (s == "original") return BoundaryFormulation::original;
  throw ConfigError("boundary_formulation must be \"simplified\" or \"original\", got \"" +
                    std::string(s) + "\"");
}

double initial_mass(const InitialData& data) {
  if (const auto* m = std::get_if<DiscreteMeasure>(&data)) return m->total_mass();
  return density_mass(std::get<DensitySpec>(data));
}

void ProblemSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(horizon > 0.0) || !std::isfinite(horizon)) fail("T must be > 0");
  if (!std::isfinite(birth_size)) fail("x_b must be finite");
  if (internalizations < 1) fail("n must be >= 1");
  if (initial_cohorts < 1) fail("N must be >= 1");
  if (!rates.growth || !rates.mortality || !rates.fecundity) {
    fail("growth, mortality and fecundity must all be set");
  }
  if (const auto* m = std::get_if<DiscreteMeasure>(&initial)) {
    if (!m->empty() && m->min_location() < birth_size) {
      fail("initial atoms must lie in [x_b, inf)");
    }
  } else {
    const auto& d = std::get<DensitySpec>(initial);
    if (!d.pdf) fail("initial density has no pdf");
    if (d.lo < birth_size) fail("initial density support must lie in [x_b, inf)");
  }
}

namespace {

using Params = std::map<std::string, double>;

class ParamReader {
 public:
  ParamReader(std::string_view model, const Params& p) : model_(model), params_(p) {}

  double required(const std::string& key, double min_value) {
    used_.insert(key);
    auto it = params_.find(key);
    if (it == params_.end()) {
      throw ConfigError(model_ + ": missing parameter '" + key + "'");
    }
    return check(key, it->second, min_value);
  }

  double optional(const std::string& key, double fallback, double min_value) {
    used_.insert(key);
    auto it = params_.find(key);
    return it == params_.end() ? fallback : check(key, it->second, min_value);
  }

  double positive(const std::string& key) {
    const double v = required(key, 0.0);
    if (v <= 0.0) throw ConfigError(model_ + ": parameter '" + key + "' must be > 0");
    return v;
  }

  void reject_unknown() const {
    for (const auto& [k, v] : params_) {
      if (!used_.contains(k)) {
        throw ConfigError(model_ + ": unknown parameter '" + k + "'");
      }
    }
  }

 private:
  double check(const std::string& key, double v, double min_value) const {
    if (!std::isfinite(v)) throw ConfigError(model_ + ": parameter '" + key + "' is not finite");
    if (v < min_value) {
      std::ostringstream os;
      os << model_ << ": parameter '" << key << "' = " << v << " must be >= " << min_value;
      throw ConfigError(os.str());
    }
    return v;
  }

  std::string model_;
  const Params& params_;
  std::set<std::string> used_;
};

constexpr double kNoLower = -std::numeric_limits<double>::infinity();

RateFn constant(double c) {
  return [c](double, const DiscreteMeasure&) { return c; };
}

VitalRates constant_vital_rates(double g, double mu, double beta) {
  VitalRates r;
  r.growth = constant(g);
  r.mortality = constant(mu);
  r.fecundity = constant(beta);
  r.growth_dx = constant(0.0);
  r.mortality_dx = constant(0.0);
  r.bounds = RateBounds{g, mu, beta};
  r.lipschitz = FeedbackLipschitz{0.0, 0.0, 0.0};
  return r;
}

}  // namespace

std::vector<std::string> catalog_names() {
  return {"pure_decay", "pure_transport", "constant_rates", "ramp_fecundity",
          "logistic_feedback"};
}

ProblemSpec catalog_build(std::string_view name, const Params& params,
                          const ProblemSetup& setup) {
  ProblemSpec spec;
  spec.model = std::string(name);
  spec.params = params;
  spec.birth_size = setup.birth_size;
  spec.horizon = setup.horizon;
  spec.initial = setup.initial;
  spec.formulation = setup.formulation;
  spec.internalizations = setup.internalizations;
  spec.initial_cohorts = setup.initial_cohorts;

  ParamReader p(name, params);
  if (name == "pure_decay") {
    const double mu0 = p.required("mu0", 0.0);
    spec.rates = constant_vital_rates(0.0, mu0, 0.0);
    spec.constant_rates = ConstantCoefficients{0.0, mu0, 0.0};
  } else if (name == "pure_transport") {
    const double g0 = p.required("g0", 0.0);
    spec.rates = constant_vital_rates(g0, 0.0, 0.0);
    spec.constant_rates = ConstantCoefficients{g0, 0.0, 0.0};
  } else if (name == "constant_rates") {
    const double g0 = p.required("g0", 0.0);
    const double mu0 = p.required("mu0", 0.0);
    const double beta0 = p.required("beta0", 0.0);
    spec.rates = constant_vital_rates(g0, mu0, beta0);
    spec.constant_rates = ConstantCoefficients{g0, mu0, beta0};
  } else if (name == "ramp_fecundity") {
    const double g0 = p.required("g0", 0.0);
    const double mu0 = p.required("mu0", 0.0);
    const double beta0 = p.required("beta0", 0.0);
    const double x_ramp = p.required("x_ramp", kNoLower);
    const double width = p.positive("ramp_width");
    const double decay = p.optional("growth_decay", 0.0, 0.0);
    const double xb = setup.birth_size;
    VitalRates r = constant_vital_rates(g0, mu0, beta0);
    // Sizes below x_b never occur; clamp so the bound g <= g0 holds everywhere.
    r.growth = [=](double x, const DiscreteMeasure&) {
      return g0 * std::exp(-decay * std::max(x - xb, 0.0));
    };
    r.growth_dx = [=](double x, const DiscreteMeasure&) {
      return x < xb ? 0.0 : -decay * g0 * std::exp(-decay * (x - xb));
    };
    r.fecundity = [=](double x, const DiscreteMeasure&) {
      return beta0 / (1.0 + std::exp(-(x - x_ramp) / width));
    };
    spec.rates = std::move(r);
  } else if (name == "logistic_feedback") {
    const double g0 = p.required("g0", 0.0);
    const double mu0 = p.required("mu0", 0.0);
    const double mu1 = p.required("mu1", 0.0);
    const double beta0 = p.required("beta0", 0.0);
    VitalRates r = constant_vital_rates(g0, mu0, beta0);
    r.mortality = [=](double, const DiscreteMeasure& env) {
      return mu0 + mu1 * env.total_mass();
    };
    // Population size never exceeds P(0) exp(beta0 T).
    const double p_max = initial_mass(setup.initial) * std::exp(beta0 * setup.horizon);
    r.bounds = RateBounds{g0, mu0 + mu1 * p_max, beta0};
    r.lipschitz = FeedbackLipschitz{0.0, mu1, 0.0};
    spec.rates = std::move(r);
  } else {
    throw ConfigError("unknown model '" + std::string(name) + "'");
  }
  p.reject_unknown();
  spec.validate();
  return spec;
}

ValidationReport validate_rates(const VitalRates& rates, double x_lo, double x_hi,
                                const std::vector<DiscreteMeasure>& probes, int points) {
  if (points < 1) throw ConfigError("validate_rates: need at least one sample point");
  if (!(x_lo <= x_hi)) throw ConfigError("validate_rates: need x_lo <= x_hi");

  ValidationReport report;
  struct Named {
    const char* name;
    const RateFn* fn;
    double bound;
    double lipschitz;
  };
  const double inf = std::numeric_limits<double>::infinity();
  const RateBounds b = rates.bounds.value_or(RateBounds{inf, inf, inf});
  const std::vector<Named> fns = {
      {"growth", &rates.growth, b.growth,
       rates.lipschitz ? rates.lipschitz->growth : inf},
      {"mortality", &rates.mortality, b.mortality,
       rates.lipschitz ? rates.lipschitz->mortality : inf},
      {"fecundity", &rates.fecundity, b.fecundity,
       rates.lipschitz ? rates.lipschitz->fecundity : inf},
  };

  std::vector<double> xs;
  for (int i = 0; i < points; ++i) {
    xs.push_back(points == 1 ? x_lo : x_lo + (x_hi - x_lo) * i / (points - 1));
  }
  std::vector<DiscreteMeasure> envs = probes;
  if (envs.empty()) envs.emplace_back();

  auto add = [&](std::string kind, const char* rate, double x, double v) {
    std::ostringstream os;
    os << "value " << v;
    report.violations.push_back({std::move(kind), rate, x, os.str()});
  };

  for (const Named& f : fns) {
    for (double x : xs) {
      for (const DiscreteMeasure& env : envs) {
        const double v = (*f.fn)(x, env);
        if (!std::isfinite(v)) {
          add("non_finite", f.name, x, v);
        } else if (v < 0.0) {
          add("negative", f.name, x, v);
        } else if (v > f.bound * (1.0 + 1e-12) + 1e-300) {
          add("exceeds_bound", f.name, x, v);
        }
      }
    }
  }

  if (rates.lipschitz) {
    for (std::size_t i = 0; i < probes.size(); ++i) {
      for (std::size_t j = i + 1; j < probes.size(); ++j) {
        const double rho = flat_distance(probes[i], probes[j]);
        for (const Named& f : fns) {
          for (double x : xs) {
            const double diff = std::abs((*f.fn)(x, probes[i]) - (*f.fn)(x, probes[j]));
            if (!std::isfinite(diff)) continue;  // already reported above
            if (diff > f.lipschitz * rho * (1.0 + 1e-9) + 1e-12) {
              std::ostringstream os;
              os << "|delta| = " << diff << " > C * rho = " << f.lipschitz * rho << " (probes "
                 << i << ", " << j << ")";
              report.violations.push_back({"feedback_lipschitz", f.name, x, os.str()});
            }
          }
        }
      }
    }
  }
  return report;
}

}  // namespace ebt
