#pragma once

#include <map>
#include <string>

#include "ebt/model.hpp"

namespace ebt::testing {

struct Setup {
  InitialData initial = DiscreteMeasure({{0.5, 1.0}});
  int N = 1;
  int n = 10;
  double T = 1.0;
  double x_b = 0.0;
  BoundaryFormulation formulation = BoundaryFormulation::simplified;
};

inline ProblemSpec problem(const std::string& model, const std::map<std::string, double>& params,
                           const Setup& s = {}) {
  ProblemSetup setup;
  setup.birth_size = s.x_b;
  setup.horizon = s.T;
  setup.initial_cohorts = s.N;
  setup.internalizations = s.n;
  setup.formulation = s.formulation;
  setup.initial = s.initial;
  return catalog_build(model, params, setup);
}

inline const std::map<std::string, double>& constant_params() {
  static const std::map<std::string, double> p = {{"g0", 1.0}, {"mu0", 0.2}, {"beta0", 0.5}};
  return p;
}

inline const std::map<std::string, double>& ramp_params() {
  static const std::map<std::string, double> p = {{"g0", 1.0},       {"mu0", 0.1},
                                                  {"beta0", 0.8},    {"x_ramp", 0.6},
                                                  {"ramp_width", 0.2}, {"growth_decay", 0.4}};
  return p;
}

inline const std::map<std::string, double>& logistic_params() {
  static const std::map<std::string, double> p = {
      {"g0", 1.0}, {"mu0", 0.1}, {"mu1", 0.3}, {"beta0", 0.6}};
  return p;
}

/// One representative instance of every catalog model.
inline std::vector<std::pair<std::string, std::map<std::string, double>>> catalog_models() {
  return {{"pure_decay", {{"mu0", 0.5}}},
          {"pure_transport", {{"g0", 1.0}}},
          {"constant_rates", constant_params()},
          {"ramp_fecundity", ramp_params()},
          {"logistic_feedback", logistic_params()}};
}

}  // namespace ebt::testing
