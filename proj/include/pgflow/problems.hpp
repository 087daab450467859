#pragma once

#include <string>
#include <vector>

#include "pgflow/core_problem.hpp"

namespace pgflow {

/// Parameters of the built-in problems. Defaults are the documented choices.
struct ProblemOptions {
  /// Horizon; <= 0 selects the problem's default (see default_horizon).
  double horizon = 0.0;
  /// quartic_trap: h(x) = a cos(2 pi x).
  double terminal_amplitude = 0.1;
  /// manufactured_concave: V*(t, x) = A e^{-t} cos(2 pi x).
  double manufactured_amplitude = 0.2;
};

std::vector<std::string> builtin_problem_names();

double default_horizon(const std::string& name);

/// quartic_trap | manufactured_concave | controlled_diffusion_demo.
/// Throws NotFound for any other name.
ProblemSpec build_problem(const std::string& name, const ProblemOptions& options = {});

/// n = n' = m = 1 problem with constant drift, diffusion and costs; none of
/// them depend on u. A test instrument for closed-form checks.
struct ConstantCoefficients {
  double drift = 0.0;
  double sigma = 0.0;
  double running_cost = 0.0;
  double terminal_cost = 0.0;
};

ProblemSpec constant_problem(const ConstantCoefficients& c);

/// Closed forms of the manufactured problem: V*, its derivatives and the
/// optimal control u* = -dV*/dx.
class ManufacturedSolution {
 public:
  explicit ManufacturedSolution(double amplitude = 0.2, double horizon = 0.5)
      : amplitude_(amplitude), horizon_(horizon) {}

  double value(double t, double x) const;
  double value_t(double t, double x) const;
  double value_x(double t, double x) const;
  double value_xx(double t, double x) const;
  double optimal_control(double t, double x) const { return -value_x(t, x); }
  /// r0 = -V_t - V_xx + V_x^2 / 2, the remainder that makes V* solve the HJB
  /// equation with r = u^2 / 2 + r0.
  double running_remainder(double t, double x) const;

  double amplitude() const { return amplitude_; }
  double horizon() const { return horizon_; }

 private:
  double amplitude_;
  double horizon_;
};

}  // namespace pgflow
