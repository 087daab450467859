#include <doctest.h>

#include "pgflow/core_problem.hpp"
#include "pgflow/errors.hpp"
#include "pgflow/problems.hpp"
#include "support.hpp"

using namespace pgflow;
using testing::mat;
using testing::vec;

TEST_CASE("geometry validation") {
  auto check = [](int n, int np, int m) { TorusGeometry{n, np, m}.validate(); };
  CHECK_NOTHROW(check(1, 1, 1));
  CHECK_NOTHROW(check(3, 2, 3));
  CHECK_THROWS_AS(check(0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(check(4, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(check(1, 1, 0), std::invalid_argument);
}

TEST_CASE("wrap and minimal-image displacement") {
  CHECK(wrap(1.25) == doctest::Approx(0.25));
  CHECK(wrap(-0.25) == doctest::Approx(0.75));
  CHECK(wrap(1.0) == 0.0);
  const Vec w = wrap(testing::vec(2.5, -1.5));
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(0.5));

  // x and x + 1 along any axis are the same point.
  CHECK(torus_displacement(vec(0.3), vec(1.3)).norm() == 0.0);
  CHECK(torus_displacement(testing::vec(0.2, 0.7), testing::vec(0.2, -0.3)).norm() == 0.0);
  CHECK(torus_displacement(vec(0.95), vec(0.05))[0] == doctest::Approx(-0.1));
  CHECK(std::abs(torus_displacement(vec(0.9), vec(0.1))[0]) <= 0.5);
}

TEST_CASE("quartic_trap coefficients at u = 1") {
  const ProblemSpec p = build_problem("quartic_trap");
  const Vec x = vec(0.3);
  CHECK(p.drift(0.0, x, vec(1.0))[0] == doctest::Approx(1.0 / 3.0));
  CHECK(p.running_cost(0.0, x, vec(1.0)) == doctest::Approx(-0.25));
  CHECK(eval_D(p, 0.0, x, vec(1.0))(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("G combines trace, drift and cost terms") {
  const ProblemSpec p = build_problem("quartic_trap");
  CoState cs{vec(0.4), mat(-2.0)};
  // Tr(P D) + p b - r = -2 + 0.4 * (8/3) - (4 - 2) at u = 2.
  CHECK(eval_G(p, 0.0, vec(0.1), vec(2.0), cs) == doctest::Approx(-2.0 + 0.4 * 8.0 / 3.0 - 2.0));
  // H with q = sigma^T p-like pairing: Tr(q^T sigma) + p b - r.
  CHECK(eval_H(p, 0.0, vec(0.1), vec(2.0), vec(0.4), mat(1.0)) ==
        doctest::Approx(std::sqrt(2.0) + 0.4 * 8.0 / 3.0 - 2.0));
}

TEST_CASE("co-state flips sign and symmetrizes") {
  Mat h(2, 2);
  h << 1.0, 2.0, 4.0, 3.0;
  const CoState cs = CoState::from_value_derivatives(testing::vec(1.0, -2.0), h);
  CHECK(cs.p[0] == -1.0);
  CHECK(cs.p[1] == 2.0);
  CHECK(cs.P(0, 1) == -3.0);
  CHECK(cs.P(1, 0) == -3.0);
  CHECK(cs.P(1, 1) == -3.0);
}

TEST_CASE("analytic u-gradient of G matches finite differences") {
  for (const std::string& name : builtin_problem_names()) {
    CAPTURE(name);
    const ProblemSpec p = build_problem(name);
    const CoState cs{vec(0.7), mat(-0.3)};
    for (double u : {-1.3, -0.2, 0.4, 1.7}) {
      const double h = 1e-6;
      const double fd = (eval_G(p, 0.1, vec(0.3), vec(u + h), cs) - eval_G(p, 0.1, vec(0.3), vec(u - h), cs)) / (2 * h);
      CHECK(grad_u_G(p, 0.1, vec(0.3), vec(u), cs)[0] == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("u-Hessian of G for the quartic problem") {
  const ProblemSpec p = build_problem("quartic_trap");
  // G = -V_x u^3/3 - u^4/4 + u^2/2 + const, so G'' = -2 V_x u - 3 u^2 + 1.
  const double vx = 0.6, u = 0.8;
  const CoState cs{vec(-vx), mat(0.0)};
  CHECK(hess_u_G(p, 0.0, vec(0.2), vec(u), cs)(0, 0) == doctest::Approx(-2 * vx * u - 3 * u * u + 1).epsilon(1e-6));
}

TEST_CASE("declared properties of the built-in problems hold") {
  for (const std::string& name : builtin_problem_names()) {
    CAPTURE(name);
    const ProblemSpec p = build_problem(name);
    const ProblemCheck c = check_problem(p, default_horizon(name), 200, 17);
    CHECK(c.derivatives_ok);
    CHECK(c.ellipticity_ok);
    CHECK(c.concavity_ok);
    CHECK(c.min_eigenvalue_D >= p.sigma0 - 1e-12);
  }
}

TEST_CASE("check_problem flags a wrong declaration") {
  ProblemSpec p = build_problem("quartic_trap");
  p.sigma0 = 2.0;  // D = 1
  CHECK_FALSE(check_problem(p, 0.2, 50, 1).ellipticity_ok);
  p = build_problem("quartic_trap");
  p.grad_u_running_cost = [](double, const Vec&, const Vec& u) { return Vec(2.0 * u); };
  CHECK_FALSE(check_problem(p, 0.2, 50, 1).derivatives_ok);
  p = build_problem("quartic_trap");
  p.mu_G = 1.0;  // G is not concave in u
  CHECK_FALSE(check_problem(p, 0.2, 50, 1).concavity_ok);
}

TEST_CASE("controlled diffusion: D(0) = 0.5 and D grows with |u|") {
  const ProblemSpec p = build_problem("controlled_diffusion_demo");
  CHECK(eval_D(p, 0.0, vec(0.4), vec(0.0))(0, 0) == doctest::Approx(0.5));
  double prev = 0.5;
  for (double u = 0.25; u <= 3.0; u += 0.25) {
    const double d = eval_D(p, 0.0, vec(0.4), vec(u))(0, 0);
    CHECK(d > prev);
    CHECK(eval_D(p, 0.0, vec(0.4), vec(-u))(0, 0) == doctest::Approx(d));
    prev = d;
  }
  CHECK(prev < 0.75);
}
