#include <doctest.h>

#include <cmath>

#include "pgflow/errors.hpp"
#include "pgflow/gradient_flow.hpp"
#include "pgflow/pde_solvers.hpp"
#include "pgflow/problems.hpp"
#include "support.hpp"

using namespace pgflow;
using testing::kTwoPi;
using testing::vec;

namespace {

SpaceTimeGrid line_grid(int n_t, int n_x, double horizon) {
  return SpaceTimeGrid(TorusGeometry{1, 1, 1}, horizon, n_t, n_x);
}

ControlField reference_control(const SpaceTimeGrid& g) {
  return ControlField::sample(g, [](double t, const Vec& x) {
    return vec(0.5 + 0.3 * std::sin(kTwoPi * x[0]) + t);
  });
}

}  // namespace

TEST_CASE("unit running cost and zero terminal cost give V = T - t") {
  const ProblemSpec p = constant_problem({0.7, 0.5, 1.0, 0.0});
  const SpaceTimeGrid g = line_grid(11, 16, 0.4);
  const ScalarField v = solve_hj(p, ControlField::constant(g, vec(0.0)), SolverConfig{});
  for (int l = 0; l < g.n_t(); ++l) {
    for (std::size_t i = 0; i < g.nodes(); ++i) CHECK(v.at(l, i) == doctest::Approx(0.4 - g.time(l)));
  }
}

TEST_CASE("no drift and no noise leave V equal to the terminal cost") {
  ProblemSpec p = constant_problem({0.0, 0.0, 0.0, 0.0});
  p.terminal_cost = [](const Vec& x) { return std::cos(kTwoPi * x[0]); };
  const SpaceTimeGrid g = line_grid(5, 16, 1.0);
  const ScalarField v = solve_hj(p, ControlField::constant(g, vec(0.0)), SolverConfig{});
  for (std::size_t i = 0; i < g.nodes(); ++i) {
    CHECK(v.at(0, i) == doctest::Approx(std::cos(kTwoPi * g.node_position(i)[0])));
  }
}

TEST_CASE("too few allowed substeps raise a CFL failure") {
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(3, 32, 0.2);
  SolverConfig cfg;
  cfg.max_substeps_per_level = 1;
  try {
    solve_hj(p, ControlField::constant(g, vec(1.0)), cfg);
    FAIL("expected CflFailure");
  } catch (const CflFailure& e) {
    CHECK(e.needed_substeps() > 1);
  }
}

TEST_CASE("density keeps unit mass and stays nonnegative") {
  const ProblemSpec p = build_problem("controlled_diffusion_demo");
  const SpaceTimeGrid g = line_grid(21, 32, 0.5);
  const ControlField u = ControlField::sample(g, [](double, const Vec& x) { return vec(std::sin(kTwoPi * x[0])); });
  std::vector<double> rho0(g.nodes());
  for (std::size_t i = 0; i < g.nodes(); ++i) rho0[i] = 1.0 + 0.9 * std::cos(kTwoPi * g.node_position(i)[0]);
  SolverReport report;
  const ScalarField rho = solve_fp(p, u, rho0, SolverConfig{}, &report);
  for (int l = 0; l < g.n_t(); ++l) CHECK(rho.spatial_mean(l) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.mass_drift_max < 1e-12);
  CHECK(report.min_density >= 0.0);
  CHECK_FALSE(report.positivity_warning);
}

TEST_CASE("invalid initial densities are rejected") {
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(3, 8, 0.2);
  const ControlField u = ControlField::constant(g, vec(1.0));
  std::vector<double> rho0(g.nodes(), 1.0);
  rho0[0] = -0.5;
  rho0[1] = 2.5;
  CHECK_THROWS_AS(solve_fp(p, u, rho0, SolverConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(solve_fp(p, u, std::vector<double>(g.nodes(), 2.0), SolverConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(solve_fp(p, u, std::vector<double>(3, 1.0), SolverConfig{}), std::invalid_argument);
}

TEST_CASE("fundamental solution starts as a unit delta") {
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(9, 16, 0.2);
  const ScalarField k = fundamental_solution(p, reference_control(g), 3, 5, SolverConfig{});
  for (int l = 0; l < 3; ++l) CHECK(k.spatial_mean(l) == 0.0);
  CHECK(k.at(3, 5) == doctest::Approx(16.0));
  for (int l = 3; l < g.n_t(); ++l) CHECK(k.spatial_mean(l) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("frozen costs on the reference grid") {
  const SpaceTimeGrid g = line_grid(33, 32, 0.2);
  const ProblemSpec quartic = build_problem("quartic_trap");
  const std::vector<double> rho0 = uniform_density(g);

  SolverReport report;
  const ControlField one = ControlField::constant(g, vec(1.0));
  const ScalarField v1 = solve_hj(quartic, one, SolverConfig{}, &report);
  CHECK(cost_J(v1, rho0) == doctest::Approx(-0.05).epsilon(1e-12));
  CHECK(cost_from_density(quartic, one, solve_fp(quartic, one, rho0, SolverConfig{})) ==
        doctest::Approx(-0.05).epsilon(1e-12));
  CHECK(report.substeps_used == 1024);

  const ControlField u = reference_control(g);
  const ScalarField v = solve_hj(quartic, u, SolverConfig{});
  const ScalarField rho = solve_fp(quartic, u, rho0, SolverConfig{});
  CHECK(cost_J(v, rho0) == doctest::Approx(-0.030071099460484033).epsilon(1e-12));
  CHECK(cost_from_density(quartic, u, rho) == doctest::Approx(-0.030070950549075222).epsilon(1e-12));
  const ControlField grad = functional_gradient(quartic, u, v, rho, SolverConfig{});
  CHECK(l2_norm(grad) == doctest::Approx(0.14268189126441364).epsilon(1e-10));
  CHECK(grad.component(0, 0, 0) == doctest::Approx(-0.37935741037315662).epsilon(1e-10));

  const SpaceTimeGrid gd = line_grid(33, 32, 0.5);
  const ProblemSpec demo = build_problem("controlled_diffusion_demo");
  CHECK(cost_J(solve_hj(demo, ControlField::constant(gd, vec(1.0)), SolverConfig{}), uniform_density(gd)) ==
        doctest::Approx(0.55).epsilon(1e-12));
}

TEST_CASE("functional gradient matches finite differences of J") {
  const SpaceTimeGrid g = line_grid(9, 16, 0.2);
  const ProblemSpec p = build_problem("controlled_diffusion_demo");
  const ControlField u = reference_control(g);
  const std::vector<double> rho0 = uniform_density(g);
  const ScalarField v = solve_hj(p, u, SolverConfig{});
  const ScalarField rho = solve_fp(p, u, rho0, SolverConfig{});
  const ControlField grad = functional_gradient(p, u, v, rho, SolverConfig{});

  ControlField dir = ControlField::sample(g, [](double t, const Vec& x) {
    return vec(std::cos(kTwoPi * x[0]) + 2.0 * t);
  });
  // Keep the substep plan fixed: the perturbation must not change the CFL count.
  const double h = 1e-6;
  const double jp = cost_J(solve_hj(p, u + h * dir, SolverConfig{}), rho0);
  const double jm = cost_J(solve_hj(p, u - h * dir, SolverConfig{}), rho0);
  CHECK(l2_inner(grad, dir) == doctest::Approx((jp - jm) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("the density audit tallies every solve") {
  reset_fp_audit();
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(5, 8, 0.2);
  solve_fp(p, ControlField::constant(g, vec(1.0)), uniform_density(g), SolverConfig{});
  const FpAudit a = fp_audit();
  CHECK(a.runs == 1);
  CHECK(a.uniform_start_runs == 1);
  CHECK(a.worst_mass_drift < 1e-12);
  CHECK(a.min_density_uniform_start > 0.0);
}
