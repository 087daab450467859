#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pgflow/errors.hpp"
#include "pgflow/gradient_flow.hpp"
#include "pgflow/mc_sampler.hpp"
#include "pgflow/parallel.hpp"
#include "pgflow/philox.hpp"
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

TEST_CASE("Philox4x32-10 known-answer vector") {
  const Philox4x32::Counter out =
      Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  CHECK(out[0] == 0xd16cfe09u);
  CHECK(out[1] == 0x94fdccebu);
  CHECK(out[2] == 0x5001e420u);
  CHECK(out[3] == 0x24126ea1u);
  const Philox4x32::Counter zero = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  CHECK(zero[0] == 0x6627e8d5u);
  CHECK(zero[1] == 0xe169c58du);
  CHECK(zero[2] == 0xbc57ac4cu);
  CHECK(zero[3] == 0x9b00dbd8u);
  const Philox4x32::Key k = Philox4x32::key_from_seed(0x0000000500000007ull);
  CHECK(k[0] == 7u);
  CHECK(k[1] == 5u);
}

TEST_CASE("uniform maps stay in range") {
  CHECK(open_uniform(0) > 0.0);
  CHECK(open_uniform(0xffffffffu) < 1.0);
  CHECK(half_open_uniform(0) == 0.0);
  CHECK(half_open_uniform(0xffffffffu) < 1.0);
}

TEST_CASE("without noise paths are straight lines") {
  const ProblemSpec p = constant_problem({0.3, 0.0, 0.0, 0.0});
  const SpaceTimeGrid g = line_grid(5, 8, 2.0);
  const TrajectoryBatch b = simulate(p, ControlField::constant(g, vec(0.0)), 50, 10, 11);
  for (int j = 0; j < b.n_paths; ++j) {
    CHECK(b.unwrapped_displacement[j] == doctest::Approx(0.6));
    CHECK(b.state(j, 10)[0] == doctest::Approx(wrap(b.state(j, 0)[0] + 0.6)));
    CHECK(b.state(j, 0)[0] >= 0.0);
    CHECK(b.state(j, 0)[0] < 1.0);
  }
}

TEST_CASE("displacement variance is 2 D T") {
  const double sigma = 0.8, horizon = 0.5;
  const ProblemSpec p = constant_problem({0.0, sigma, 0.0, 0.0});
  const SpaceTimeGrid g = line_grid(3, 8, horizon);
  const int n = 20000;
  const TrajectoryBatch b = simulate(p, ControlField::constant(g, vec(0.0)), n, 8, 5);
  double s = 0.0, s2 = 0.0;
  for (double d : b.unwrapped_displacement) {
    s += d;
    s2 += d * d;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  const double expected = sigma * sigma * horizon;
  CHECK(std::abs(var - expected) < 5.0 * expected * std::sqrt(2.0 / n));
  CHECK(std::abs(mean) < 5.0 * std::sqrt(expected / n));
}

TEST_CASE("the same seed reproduces the batch and a new seed changes it") {
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(9, 16, 0.2);
  const ControlField u = reference_control(g);
  const TrajectoryBatch a = simulate(p, u, 64, 12, 99);
  const TrajectoryBatch b = simulate(p, u, 64, 12, 99);
  const TrajectoryBatch c = simulate(p, u, 64, 12, 100);
  CHECK(a.states == b.states);
  CHECK(a.noise == b.noise);
  CHECK(a.states != c.states);
}

TEST_CASE("batches do not depend on the thread count") {
  const ProblemSpec p = build_problem("controlled_diffusion_demo");
  const SpaceTimeGrid g = line_grid(9, 16, 0.5);
  const ControlField u = reference_control(g);
  set_thread_cap(1);
  const TrajectoryBatch one = simulate(p, u, 257, 9, 4);
  set_thread_cap(4);
  const TrajectoryBatch four = simulate(p, u, 257, 9, 4);
  set_thread_cap(0);
  CHECK(one.states == four.states);
  CHECK(one.noise == four.noise);
  CHECK(one.unwrapped_displacement == four.unwrapped_displacement);
}

TEST_CASE("cost estimates for constant costs are exact") {
  const SpaceTimeGrid g = line_grid(3, 8, 0.7);
  const ControlField u = ControlField::constant(g, vec(0.0));
  const ProblemSpec running = constant_problem({0.2, 0.5, 1.0, 0.0});
  const McEstimate r = estimate_J_mc(running, u, simulate(running, u, 100, 7, 1));
  CHECK(r.estimate == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(r.std_error == doctest::Approx(0.0).epsilon(1e-14));
  const ProblemSpec terminal = constant_problem({0.2, 0.5, 0.0, -2.5});
  CHECK(estimate_J_mc(terminal, u, simulate(terminal, u, 100, 7, 1)).estimate == -2.5);
}

TEST_CASE("frozen sampler output on the reference problem") {
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(33, 32, 0.2);
  const ControlField u = reference_control(g);
  const TrajectoryBatch b = simulate(p, u, 1000, 20, 7);
  const McEstimate e = estimate_J_mc(p, u, b);
  CHECK(e.estimate == doctest::Approx(-0.02677068257303851).epsilon(1e-12));
  CHECK(e.std_error == doctest::Approx(0.0022572082025767541).epsilon(1e-12));
  CHECK(b.state(3, 5)[0] == doctest::Approx(0.26299919533438504).epsilon(1e-14));
  // Within a few standard errors of the PDE cost on the same grid.
  CHECK(std::abs(e.estimate - (-0.030071099460484033)) < 3.0 * e.std_error);
}

TEST_CASE("regression of a zero target returns the control unchanged") {
  const ProblemSpec p = constant_problem({0.1, 0.5, 1.0, 0.0});
  const SpaceTimeGrid g = line_grid(5, 8, 0.4);
  const ControlField u = reference_control(g);
  const ScalarField v = solve_hj(p, u, SolverConfig{});
  RegressionReport rep;
  const ControlField out = regression_update(p, u, v, simulate(p, u, 400, 8, 2), 0.5, &rep);
  CHECK(l2_norm(out - u) == 0.0);
  CHECK(rep.samples == 400 * 8);
  CHECK(rep.lambda > 0.0);
}

TEST_CASE("samples on every node reproduce the exact increment") {
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(5, 8, 0.2);
  const ControlField u = reference_control(g);
  const ScalarField v = solve_hj(p, u, SolverConfig{});
  std::vector<SamplePoint> samples;
  for (int l = 0; l < g.n_t(); ++l) {
    for (std::size_t i = 0; i < g.nodes(); ++i) samples.push_back({g.time(l), g.node_position(i)});
  }
  RegressionReport rep;
  const ControlField out = regression_from_samples(p, u, v, samples, 0.3, &rep);
  const ControlField exact = exact_step_increment(p, u, v, 0.3);
  CHECK(rep.unvisited == 0);
  CHECK(l2_norm(out - u - exact) < 1e-6 * l2_norm(exact));
}

TEST_CASE("regression without samples fails") {
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(5, 8, 0.2);
  const ControlField u = reference_control(g);
  const ScalarField v = solve_hj(p, u, SolverConfig{});
  CHECK_THROWS_AS(regression_from_samples(p, u, v, std::vector<SamplePoint>{}, 0.3), RegressionFailure);
}

TEST_CASE("regression gap shrinks with more paths") {
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(11, 16, 0.2);
  const ControlField u = reference_control(g);
  const ScalarField v = solve_hj(p, u, SolverConfig{});
  const ScalarField rho = solve_fp(p, u, uniform_density(g), SolverConfig{});
  const auto rows = regression_consistency(p, u, v, rho, 0.3, {100, 1000, 10000}, 20, 8);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].gap < rows[0].gap);
  CHECK(rows[2].gap < rows[1].gap);
  CHECK(rows[2].weighted_gap < rows[0].weighted_gap);
}

TEST_CASE("common-noise coupling") {
  const ProblemSpec p = build_problem("manufactured_concave");
  const SpaceTimeGrid g = line_grid(9, 16, 0.5);
  const ControlField u = reference_control(g);
  const CouplingRecord same = coupling_experiment(p, u, u, 200, 20, 3);
  CHECK(same.sup_mean_sq_distance == 0.0);
  CHECK(same.ratio == 0.0);

  const ControlField flat = ControlField::constant(g, vec(0.3));
  const ControlField shift = ControlField::constant(g, vec(0.01));
  const CouplingRecord moved = coupling_experiment(p, flat, flat + shift, 200, 20, 3);
  // b = u, so a constant shift c moves every path by c t: sup_t = (c T)^2 against c^2 T.
  CHECK(moved.sup_mean_sq_distance == doctest::Approx(0.005 * 0.005).epsilon(1e-8));
  CHECK(moved.l2_control_distance_sq == doctest::Approx(0.01 * 0.01 * 0.5).epsilon(1e-12));
  CHECK(moved.ratio == doctest::Approx(0.5).epsilon(1e-8));

  double prev = 0.0;
  for (double c : {0.04, 0.02}) {
    const ControlField bump = ControlField::sample(g, [c](double, const Vec& x) {
      return vec(c * std::cos(kTwoPi * x[0]));
    });
    const double d = coupling_experiment(p, u, u + bump, 2000, 20, 3).sup_mean_sq_distance;
    if (prev > 0.0) CHECK(prev / d == doctest::Approx(4.0).epsilon(0.3));
    prev = d;
  }
}

TEST_CASE("batch dump round trip") {
  const ProblemSpec p = build_problem("quartic_trap");
  const SpaceTimeGrid g = line_grid(5, 8, 0.2);
  const TrajectoryBatch b = simulate(p, reference_control(g), 17, 6, 123456789012345ull);
  std::stringstream ss;
  write_batch(ss, b);
  CHECK(ss.str().substr(0, 8) == "CTRLTRJ1");
  const TrajectoryBatch r = read_batch(ss);
  CHECK(r.n_paths == 17);
  CHECK(r.n_steps == 6);
  CHECK(r.horizon == 0.2);
  CHECK(r.seed == 123456789012345ull);
  CHECK(r.states == b.states);
  CHECK(r.unwrapped_displacement == b.unwrapped_displacement);
  CHECK(r.noise == b.noise);

  std::string bytes = ss.str();
  bytes[0] = 'X';
  std::stringstream bad(bytes);
  CHECK_THROWS(read_batch(bad));
}
