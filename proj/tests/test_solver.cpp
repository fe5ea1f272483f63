#include <cmath>

#include "doctest.h"
#include "ebt/errors.hpp"
#include "ebt/residual.hpp"
#include "ebt/solver.hpp"
#include "ebt/verify.hpp"
#include "support/problems.hpp"

using namespace ebt;
using testing::Setup;

namespace {

CohortState fresh_state(BoundaryFormulation f, double xb = 0.0) {
  CohortState s;
  s.formulation = f;
  s.birth_size = xb;
  s.boundary = {0, 0.0, xb};
  s.internal = {{1, 0.6, 0.5}, {2, 0.4, 1.5}};
  return s;
}

}  // namespace

TEST_CASE("rhs examples") {
  SUBCASE("pure transport") {
    const ProblemSpec p = testing::problem("pure_transport", {{"g0", 1.0}});
    const StateDerivative d = rhs(fresh_state(BoundaryFormulation::simplified), p);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(d.internal_center[i] == 1.0);
      CHECK(d.internal_abundance[i] == 0.0);
    }
  }
  const ProblemSpec cr = testing::problem("constant_rates", testing::constant_params());
  SUBCASE("simplified boundary after internalization") {
    const StateDerivative d = rhs(fresh_state(BoundaryFormulation::simplified), cr);
    CHECK(d.boundary_abundance == doctest::Approx(0.5 * 1.0));
    CHECK(d.boundary_center == 1.0);
    CHECK(d.internal_abundance[0] == doctest::Approx(-0.2 * 0.6));
  }
  SUBCASE("original boundary after internalization") {
    const StateDerivative d = rhs(fresh_state(BoundaryFormulation::original), cr);
    CHECK(d.boundary_abundance == doctest::Approx(0.5 * 1.0));
    CHECK(d.boundary_pi == 0.0);
    CHECK(d.boundary_center == 0.0);
  }
  SUBCASE("birth sum includes the boundary cohort") {
    CohortState s = fresh_state(BoundaryFormulation::simplified);
    s.boundary = {0, 0.25, 0.1};
    const StateDerivative d = rhs(s, cr);
    CHECK(d.birth_flux == doctest::Approx(0.5 * 1.25));
    CHECK(d.boundary_abundance == doctest::Approx(0.5 * 1.25 - 0.2 * 0.25));
  }
  SUBCASE("non-finite rate aborts with location") {
    ProblemSpec bad = cr;
    bad.rates.growth = [](double x, const DiscreteMeasure&) { return x > 1.0 ? NAN : 1.0; };
    try {
      rhs(fresh_state(BoundaryFormulation::simplified), bad);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("x = 1.5") != std::string::npos);
    }
  }
}

TEST_CASE("original boundary uses finite differences when derivatives are absent") {
  ProblemSpec p = testing::problem("ramp_fecundity", testing::ramp_params());
  CohortState s = fresh_state(BoundaryFormulation::original);
  s.boundary = {0, 0.3, 0.0};
  s.boundary_pi = 0.02;
  s.boundary.center = boundary_center_from_pi(0.02, 0.3, 0.0);
  const StateDerivative exact = rhs(s, p);
  p.rates.growth_dx = {};
  p.rates.mortality_dx = {};
  const StateDerivative fd = rhs(s, p);
  CHECK(fd.boundary_pi == doctest::Approx(exact.boundary_pi).epsilon(1e-8));
  CHECK(fd.boundary_abundance == doctest::Approx(exact.boundary_abundance).epsilon(1e-8));
}

TEST_CASE("assemble_measure") {
  CohortState s;
  s.birth_size = 1.0;
  s.boundary = {0, 1.0, 2.0};
  s.internal = {{1, 0.5, 3.0}};
  const DiscreteMeasure m = assemble_measure(s);
  REQUIRE(m.size() == 2);
  CHECK(m.atoms()[0].location == 2.0);
  CHECK(m.atoms()[0].mass == 1.0);
  CHECK(m.atoms()[1].location == 3.0);
  CHECK(m.atoms()[1].mass == 0.5);

  s.formulation = BoundaryFormulation::original;
  s.boundary = {0, 0.3, 1.0};
  s.boundary_pi = 0.0;
  CHECK(assemble_measure(s).atoms()[0].location == 1.0);
  s.boundary = {0, 0.4, 1.5};
  s.boundary_pi = 0.2;
  CHECK(assemble_measure(s).atoms()[0].location == doctest::Approx(1.5));
  CHECK_THROWS_AS(boundary_center_from_pi(0.2, 0.0, 1.0), NumericalError);
}

TEST_CASE("internalize") {
  CohortState s;
  s.birth_size = 0.0;
  s.boundary = {0, 0.7, 1.2};
  s.internal = {{1, 0.5, 3.0}};
  const CohortState a = internalize(s);
  CHECK(a.boundary.index == -1);
  CHECK(a.boundary.abundance == 0.0);
  CHECK(a.boundary.center == 0.0);
  REQUIRE(a.internal.size() == 2);
  CHECK(a.internal[0].index == 0);
  CHECK(a.internal[0].abundance == 0.7);
  CHECK(a.internal[0].center == 1.2);
  const CohortState b = internalize(a);
  CHECK(b.internal.size() == 3);
  CHECK(assemble_measure(b).total_mass() == assemble_measure(s).total_mass());

  CohortState o;
  o.formulation = BoundaryFormulation::original;
  o.birth_size = 1.0;
  o.boundary = {0, 0.4, 1.5};
  o.boundary_pi = 0.2;
  const CohortState oi = internalize(o);
  CHECK(oi.internal[0].center == doctest::Approx(1.5));
  CHECK(oi.internal[0].abundance == 0.4);
  CHECK(oi.boundary_pi == 0.0);
  CHECK(oi.boundary.center == 1.0);
}

TEST_CASE("prune") {
  CohortState s;
  s.boundary = {0, 0.0, 0.0};
  s.internal = {{1, 1e-12, 0.5}, {2, 0.5, 1.0}};
  CHECK(prune(s, 0.0).state.internal.size() == 2);
  const PruneResult r = prune(s, 1e-9);
  REQUIRE(r.state.internal.size() == 1);
  CHECK(r.state.internal[0].abundance == 0.5);
  CHECK(r.removed_count == 1);
  CHECK(r.removed_mass == 1e-12);
  CHECK(r.removed_mass <= 1e-9 * r.removed_count);
  CHECK(r.state.boundary.abundance == 0.0);
  CHECK(prune(s, 10.0).state.boundary.index == 0);
  CHECK_THROWS_AS(prune(s, -1.0), ConfigError);
}

TEST_CASE("init_cohorts") {
  SUBCASE("uniform density quantile cells") {
    const CohortState s = init_cohorts(uniform_density(0.0, 1.0, 1.0), 2, 0.0);
    REQUIRE(s.internal.size() == 2);
    CHECK(s.internal[0].abundance == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.internal[0].center == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(s.internal[1].center == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(s.boundary.index == 0);
    CHECK(s.boundary.abundance == 0.0);
  }
  SUBCASE("atomic data copied verbatim") {
    const CohortState s = init_cohorts(DiscreteMeasure({{2.0, 1.0}}), 3, 0.0);
    REQUIRE(s.internal.size() == 3);
    CHECK(s.internal[0].abundance == 1.0);
    CHECK(s.internal[0].center == 2.0);
    CHECK(s.internal[1].abundance == 0.0);
    CHECK(s.internal[2].abundance == 0.0);
    CHECK(s.internal[2].index == 3);
  }
  SUBCASE("more atoms than cohorts keeps mass") {
    std::vector<Atom> atoms;
    for (int i = 0; i < 10; ++i) atoms.push_back({0.1 * i, 0.1 + 0.01 * i});
    const DiscreteMeasure m(atoms);
    const CohortState s = init_cohorts(m, 3, 0.0);
    REQUIRE(s.internal.size() == 3);
    const DiscreteMeasure z = assemble_measure(s);
    CHECK(z.total_mass() == doctest::Approx(m.total_mass()).epsilon(1e-14));
    CHECK(integrate(z, [](double x) { return x; }) ==
          doctest::Approx(integrate(m, [](double x) { return x; })).epsilon(1e-12));
  }
  SUBCASE("density mass preserved") {
    const DensitySpec d = triangular_density(0.0, 0.3, 2.0, 1.7);
    const CohortState s = init_cohorts(d, 37, 0.0);
    CHECK(assemble_measure(s).total_mass() == doctest::Approx(1.7).epsilon(1e-13));
  }
  SUBCASE("truncated exponential: functionals converge in N") {
    const DensitySpec d = truncated_exponential_density(0.0, 3.0, 1.5, 1.0);
    std::vector<TestFunction> bumps;
    for (int k = 0; k < 5; ++k) bumps.push_back({"b", 0.3 + 0.6 * k, 0.5, std::nullopt});
    double previous = INFINITY;
    for (int N : {10, 20, 40, 100}) {
      const DiscreteMeasure z = assemble_measure(init_cohorts(d, N, 0.0));
      double worst = 0.0;
      for (const TestFunction& phi : bumps) {
        auto f = [&](double x) { return eval_testfn(phi, x, 0.0).value; };
        worst = std::max(worst, std::abs(integrate(z, f) - integrate_density(d, f)));
      }
      CHECK(worst < previous);
      previous = worst;
    }
    CHECK(previous < 1e-3);
  }
  CHECK_THROWS_AS(init_cohorts(DiscreteMeasure{}, 0, 0.0), ConfigError);
}

TEST_CASE("effective step") {
  CHECK(effective_step(1.0, 10, 1e-3) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(effective_step(1.0, 3, 0.1) == doctest::Approx(1.0 / 12.0));
  CHECK(effective_step(1.0, 1, 5.0) == 1.0);
}

TEST_CASE("run: closed-form examples") {
  SUBCASE("pure transport moves every cohort by g0 T") {
    Setup s;
    s.initial = uniform_density(0.0, 1.0, 1.0);
    s.N = 20;
    s.n = 1;
    s.T = 2.0;
    const Trajectory traj =
        run(testing::problem("pure_transport", {{"g0", 1.0}}, s), RunOptions{1e-3, 0.0, 1});
    const CohortState& a = traj.snapshots.front().state;
    const CohortState& b = traj.final_snapshot().state;
    for (std::size_t i = 0; i < a.internal.size(); ++i) {
      CHECK(std::abs(b.internal[i].center - (a.internal[i].center + 2.0)) <= 1e-12);
    }
  }
  SUBCASE("pure decay") {
    Setup s;
    s.initial = uniform_density(0.0, 1.0, 1.0);
    s.N = 10;
    s.n = 4;
    s.T = 2.0;
    const Trajectory traj =
        run(testing::problem("pure_decay", {{"mu0", 0.5}}, s), RunOptions{1e-3, 0.0, 1});
    const CohortState& a = traj.snapshots.front().state;
    const CohortState& b = traj.final_snapshot().state;
    for (const Cohort& c : a.internal) {
      auto it = std::find_if(b.internal.begin(), b.internal.end(),
                             [&](const Cohort& d) { return d.index == c.index; });
      REQUIRE(it != b.internal.end());
      CHECK(std::abs(it->abundance / c.abundance - std::exp(-1.0)) <= 1e-10);
    }
  }
  SUBCASE("constant rates total mass") {
    Setup s;
    s.initial = DiscreteMeasure({{0.2, 0.6}, {0.9, 0.4}});
    s.N = 2;
    s.n = 20;
    s.T = 2.0;
    const Trajectory traj = run(
        testing::problem("constant_rates", {{"g0", 1.0}, {"mu0", 0.0}, {"beta0", 0.5}}, s),
        RunOptions{1e-3, 0.0, 1});
    CHECK(traj.final_snapshot().measure.total_mass() ==
          doctest::Approx(std::exp(1.0)).epsilon(1e-8));
  }
}

TEST_CASE("trajectory structure") {
  Setup s;
  s.n = 5;
  const Trajectory traj =
      run(testing::problem("constant_rates", testing::constant_params(), s), RunOptions{0.01, 0.0, 3});
  CHECK(traj.internalization_times.size() == 4);
  for (double t : traj.internalization_times) {
    const auto i = traj.find(t);
    REQUIRE(i);
    CHECK(traj.snapshots[*i].before_internalization.has_value());
  }
  for (std::size_t i = 1; i < traj.snapshots.size(); ++i) {
    CHECK(traj.snapshots[i].t > traj.snapshots[i - 1].t);
  }
  for (const Snapshot& snap : traj.snapshots) {
    const DiscreteMeasure m = assemble_measure(snap.state);
    CHECK(m.total_mass() == snap.measure.total_mass());
  }
  CHECK(traj.final_snapshot().t == 1.0);
  CHECK(traj.final_snapshot().state.boundary.index == -4);
  CHECK_THROWS_AS(run(testing::problem("constant_rates", testing::constant_params(), s),
                      RunOptions{0.0, 0.0, 1}),
                  ConfigError);
  CHECK_THROWS_AS(run(testing::problem("constant_rates", testing::constant_params(), s),
                      RunOptions{0.01, 0.0, 0}),
                  ConfigError);
}

TEST_CASE("negative abundance beyond tolerance aborts") {
  Setup s;
  const ProblemSpec p = testing::problem("pure_decay", {{"mu0", 5000.0}}, s);
  CHECK_THROWS_AS(run(p, RunOptions{1e-3, 0.0, 1}), NumericalError);
}

TEST_CASE("pruning at internalization reports its mass loss") {
  Setup s;
  s.initial = DiscreteMeasure({{0.5, 1.0}, {0.7, 1e-6}});
  s.N = 2;
  s.n = 4;
  const Trajectory traj =
      run(testing::problem("constant_rates", testing::constant_params(), s), RunOptions{1e-3, 1e-3, 1});
  CHECK(traj.pruned_count == 1);
  CHECK(traj.pruned_mass > 0.0);
  CHECK(traj.pruned_mass <= 1e-3);
  CHECK(traj.final_snapshot().state.internal.size() == 4);  // 1 initial + 3 internalized
}

TEST_CASE("interior exactness: cohorts follow their own characteristics") {
  Setup s;
  s.initial = DiscreteMeasure({{0.1, 1.0}, {0.8, 0.5}, {1.9, 0.25}});
  s.N = 3;
  s.n = 7;
  s.T = 2.0;
  auto params = testing::ramp_params();
  params["beta0"] = 0.0;
  const ProblemSpec p = testing::problem("ramp_fecundity", params, s);
  const Trajectory traj = run(p, RunOptions{1e-3, 0.0, 1});
  const double g0 = params["g0"], gamma = params["growth_decay"], mu0 = params["mu0"];
  for (const Snapshot& snap : traj.snapshots) {
    for (const Cohort& c : snap.state.internal) {
      if (c.index < 1) continue;
      const Atom a0 = std::get<DiscreteMeasure>(s.initial).atoms()[c.index - 1];
      const double x = std::log(std::exp(gamma * a0.location) + gamma * g0 * snap.t) / gamma;
      CHECK(std::abs(c.center - x) <= 1e-10);
      CHECK(std::abs(c.abundance - a0.mass * std::exp(-mu0 * snap.t)) <= 1e-10);
    }
  }
}

TEST_CASE("bounds along catalog runs") {
  for (const auto& [name, params] : testing::catalog_models()) {
    for (auto f : {BoundaryFormulation::simplified, BoundaryFormulation::original}) {
      CAPTURE(name);
      Setup s;
      s.initial = triangular_density(0.0, 0.4, 1.0, 1.0);
      s.N = 10;
      s.n = 8;
      s.T = 1.5;
      s.formulation = f;
      const ProblemSpec p = testing::problem(name, params, s);
      const Trajectory traj = run(p, RunOptions{2e-3, 0.0, 1});
      CHECK(check_mass_bound(traj).ok);
      CHECK(boundary_growth(traj).ok());
      if (p.rates.bounds->fecundity == 0.0) CHECK(check_tail_bound(traj).ok);

      // Internal cohorts never gain individuals.
      for (std::size_t i = 1; i < traj.snapshots.size(); ++i) {
        const CohortState& prev = traj.snapshots[i - 1].state;
        const CohortState& cur = traj.snapshots[i].left_state();
        for (const Cohort& c : cur.internal) {
          for (const Cohort& d : prev.internal) {
            if (d.index == c.index) CHECK(c.abundance <= d.abundance);
          }
        }
      }
    }
  }
}

TEST_CASE("simplified and original formulations approach each other") {
  Setup s;
  s.initial = DiscreteMeasure({{0.3, 1.0}});
  s.N = 1;
  s.T = 1.0;
  double previous = INFINITY;
  for (int n : {10, 20, 40, 80}) {
    s.n = n;
    s.formulation = BoundaryFormulation::simplified;
    const Trajectory a = run(testing::problem("ramp_fecundity", testing::ramp_params(), s),
                             RunOptions{1e-3, 0.0, 1});
    s.formulation = BoundaryFormulation::original;
    const Trajectory b = run(testing::problem("ramp_fecundity", testing::ramp_params(), s),
                             RunOptions{1e-3, 0.0, 1});
    const double d = flat_distance(a.final_snapshot().measure, b.final_snapshot().measure);
    CAPTURE(n);
    CHECK(d <= 1.5 * previous);
    previous = d;
  }
}
