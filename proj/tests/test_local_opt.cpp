#include <doctest.h>

#include <cmath>

#include "pgflow/errors.hpp"
#include "pgflow/experiments.hpp"
#include "pgflow/local_opt.hpp"
#include "pgflow/problems.hpp"
#include "support.hpp"

using namespace pgflow;
using testing::mat;
using testing::vec;

namespace {

// Co-state of a value with slope v_x and no curvature.
CoState slope_costate(double v_x) { return CoState{vec(-v_x), mat(0.0)}; }

}  // namespace

TEST_CASE("quartic closed forms are the minimizers of g") {
  for (double vx : {-1.5, -0.3, 0.2, 0.9}) {
    CAPTURE(vx);
    const QuarticBranches b = quartic_closed_forms(vx);
    auto dg = [vx](double u) { return u * u * u + vx * u * u - u; };
    CHECK(std::abs(dg(b.u_star)) < 1e-12);
    CHECK(std::abs(dg(b.u_tilde)) < 1e-12);
    auto g = [vx](double u) { return 0.25 * u * u * u * u + vx * u * u * u / 3.0 - 0.5 * u * u; };
    CHECK(g(b.u_star) < g(b.u_tilde));
  }
}

TEST_CASE("argmax of G matches the global quartic branch") {
  const ProblemSpec p = build_problem("quartic_trap");
  for (double vx : {-1.2, -0.4, 0.3, 1.1}) {
    CAPTURE(vx);
    const ArgmaxResult r = argmax_G(p, 0.0, vec(0.2), slope_costate(vx), vec(0.0), ArgmaxConfig{});
    CHECK(r.u[0] == doctest::Approx(quartic_closed_forms(vx).u_star).epsilon(1e-9));
    CHECK(r.residual <= 1e-10);
    CHECK_FALSE(r.tie_broken);
  }
}

TEST_CASE("argmax of G for the manufactured problem is -V_x") {
  const ProblemSpec p = build_problem("manufactured_concave");
  const ArgmaxResult r = argmax_G(p, 0.1, vec(0.3), slope_costate(0.7), vec(2.0), ArgmaxConfig{});
  CHECK(r.u[0] == doctest::Approx(-0.7).epsilon(1e-10));
}

TEST_CASE("a flat slope is a tie resolved to +1") {
  const ProblemSpec p = build_problem("quartic_trap");
  const ArgmaxResult r = argmax_G(p, 0.0, vec(0.5), slope_costate(0.0), vec(0.0), ArgmaxConfig{});
  CHECK(r.u[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.tie_broken);
}

TEST_CASE("incumbent-only search stays in the local well") {
  const ProblemSpec p = build_problem("quartic_trap");
  const double vx = 0.4;
  const QuarticBranches b = quartic_closed_forms(vx);
  ArgmaxConfig local;
  local.incumbent_only = true;
  const ArgmaxResult stay = argmax_G(p, 0.0, vec(0.5), slope_costate(vx), vec(b.u_tilde + 0.1), local);
  CHECK(stay.u[0] == doctest::Approx(b.u_tilde).epsilon(1e-9));
  const ArgmaxResult jump = argmax_G(p, 0.0, vec(0.5), slope_costate(vx), vec(b.u_tilde + 0.1), ArgmaxConfig{});
  CHECK(jump.u[0] == doctest::Approx(b.u_star).epsilon(1e-9));
}

TEST_CASE("a maximizer outside the control box is reported") {
  ProblemSpec p = build_problem("quartic_trap");
  p.u_box = 0.5;
  CHECK_THROWS_AS(argmax_G(p, 0.0, vec(0.5), slope_costate(0.2), vec(0.0), ArgmaxConfig{}), BoxViolation);
}

TEST_CASE("an iteration budget that is too small fails loudly") {
  const ProblemSpec p = build_problem("quartic_trap");
  ArgmaxConfig cfg;
  cfg.max_newton_iters = 1;
  try {
    argmax_G(p, 0.0, vec(0.5), slope_costate(0.2), vec(3.0), cfg);
    FAIL("expected ArgmaxFailure");
  } catch (const ArgmaxFailure& e) {
    CHECK(e.best_residual() > 1e-10);
  }
  cfg.max_newton_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("local optimal field of the manufactured value is the optimal control") {
  const ProblemSpec p = build_problem("manufactured_concave");
  const ManufacturedSolution sol;
  const SpaceTimeGrid g(TorusGeometry{1, 1, 1}, 0.5, 9, 64);
  const ScalarField v = manufactured_value(g, sol);
  const ControlField diamond = local_optimal_field(p, ControlField::constant(g, vec(0.0)), v, ArgmaxConfig{});
  CHECK(l2_norm(diamond - manufactured_optimal_control(g, sol)) < 5e-3);
}

TEST_CASE("HJB residual of the exact value shrinks fourfold per refinement") {
  const ProblemSpec p = build_problem("manufactured_concave");
  const ManufacturedSolution sol;
  double prev = 0.0;
  for (int n : {16, 32, 64}) {
    const SpaceTimeGrid g(TorusGeometry{1, 1, 1}, 0.5, n + 1, n);
    const double r = hjb_residual(p, manufactured_value(g, sol), ArgmaxConfig{});
    if (prev > 0.0) CHECK(prev / r == doctest::Approx(4.0).epsilon(0.1));
    prev = r;
  }
}
