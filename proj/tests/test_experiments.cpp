#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "pgflow/errors.hpp"
#include "pgflow/experiments.hpp"
#include "support.hpp"

using namespace pgflow;
using testing::mat;
using testing::vec;

TEST_CASE("unknown problems are reported") {
  CHECK_THROWS_AS(build_problem("no_such_problem"), NotFound);
  CHECK_THROWS_AS(default_horizon("no_such_problem"), NotFound);
}

TEST_CASE("the manufactured value solves its HJB equation exactly") {
  const ManufacturedSolution sol(0.2, 0.5);
  const ProblemSpec p = build_problem("manufactured_concave");
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ut(0.0, 0.5), ux(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double t = ut(rng), x = ux(rng);
    const CoState cs{vec(-sol.value_x(t, x)), mat(-sol.value_xx(t, x))};
    const double g = eval_G(p, t, vec(x), vec(sol.optimal_control(t, x)), cs);
    worst = std::max(worst, std::abs(-sol.value_t(t, x) + g));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("manufactured fields sample the closed forms") {
  const ManufacturedSolution sol(0.3, 0.5);
  const SpaceTimeGrid g(TorusGeometry{1, 1, 1}, 0.5, 3, 8);
  const ScalarField v = manufactured_value(g, sol);
  const ControlField u = manufactured_optimal_control(g, sol);
  CHECK(v.at(2, 2) == doctest::Approx(sol.value(0.5, 0.25)));
  CHECK(u.at(1, 2)[0] == doctest::Approx(sol.optimal_control(0.25, 0.25)));
}

TEST_CASE("line fit") {
  const LinearFit exact = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(exact.slope == doctest::Approx(2.0));
  CHECK(exact.intercept == doctest::Approx(1.0));
  CHECK(exact.r2 == doctest::Approx(1.0));
  const LinearFit noisy = fit_line({0, 1, 2, 3}, {0, 1, 0, 1});
  CHECK(noisy.r2 < 0.5);
}

TEST_CASE("random smooth controls are reproducible") {
  const SpaceTimeGrid g(TorusGeometry{1, 1, 1}, 0.5, 5, 16);
  std::mt19937_64 a(5), b(5), c(6);
  const ControlField ua = random_smooth_control(g, a, 0.5);
  const ControlField ub = random_smooth_control(g, b, 0.5);
  const ControlField uc = random_smooth_control(g, c, 0.5);
  CHECK(ua.values() == ub.values());
  CHECK(ua.values() != uc.values());
  CHECK(ua.all_finite());
}

TEST_CASE("experiment reports evaluate verdicts") {
  ExperimentReport r;
  r.name = "demo";
  CHECK(r.add("a", 1.0, "<", 2.0).pass);
  CHECK_FALSE(r.add("b", 2.0, "<", 2.0).pass);
  CHECK(r.add("c", 2.0, "<=", 2.0).pass);
  CHECK(r.add("d", 3.0, ">=", 3.0).pass);
  CHECK_FALSE(r.passed());

  ExperimentReport ok;
  ok.add("x", 0.5, ">", 0.1);
  CHECK(ok.passed());
  CHECK_FALSE(ok.add("nan", std::numeric_limits<double>::quiet_NaN(), "<", 1.0).pass);
  CHECK_FALSE(ok.add("nan2", std::numeric_limits<double>::quiet_NaN(), ">=", 1.0).pass);
  CHECK_FALSE(ok.passed());

  std::ostringstream os;
  r.write_csv(os);
  CHECK(os.str().find("\n" + ExperimentReport::csv_header() + "\n") != std::string::npos);
  CHECK(ExperimentReport::csv_header() == "experiment,metric,value,op,threshold,verdict");
}
