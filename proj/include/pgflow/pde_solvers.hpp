#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pgflow/core_problem.hpp"
#include "pgflow/fields.hpp"

namespace pgflow {

struct SolverConfig {
  double cfl_safety = 0.4;
  int max_substeps_per_level = 1024;
  double mass_tolerance = 1e-8;

  void validate() const;
};

/// One CSV row per solve. Density columns are NaN (printed blank) for
/// value solves.
struct SolverReport {
  long substeps_used = 0;
  double mass_drift_max = std::numeric_limits<double>::quiet_NaN();
  double min_density = std::numeric_limits<double>::quiet_NaN();
  double cfl_limit = std::numeric_limits<double>::infinity();
  bool positivity_warning = false;

  static std::string csv_header();
  std::string csv_row() const;
};

/// Number of explicit substeps in each interval [t_l, t_{l+1}].
///
/// The value and density solvers share one plan, which makes the density
/// update the exact transpose of the value update. The step limit is
/// cfl_safety * min(dx^2 / (2 n D_max), dx / (|b|_max + eps)), with D_max and
/// |b|_max taken over the interval's endpoint and midpoint controls.
struct SubstepPlan {
  std::vector<int> per_interval;
  double cfl_limit = std::numeric_limits<double>::infinity();
  long total() const;
};

SubstepPlan plan_substeps(const ProblemSpec& spec, const ControlField& u, const SolverConfig& cfg);

/// Backward explicit march of -V_t + G(t, x, u, -grad V, -hess V) = 0 with
/// V(T) = h. Each substep evaluates the coefficients at its midpoint time with
/// the control linearly interpolated between levels.
ScalarField solve_hj(const ProblemSpec& spec, const ControlField& u, const SolverConfig& cfg,
                     SolverReport* report = nullptr);

/// Forward conservative march of the Fokker-Planck equation from level 0.
/// rho0 must be nonnegative with spatial mean 1.
ScalarField solve_fp(const ProblemSpec& spec, const ControlField& u,
                     std::span<const double> rho0, const SolverConfig& cfg,
                     SolverReport* report = nullptr);

/// Forward march from an arbitrary start level; levels before it are zero.
ScalarField solve_fp_from(const ProblemSpec& spec, const ControlField& u, int start_level,
                          std::span<const double> initial, const SolverConfig& cfg,
                          SolverReport* report = nullptr);

/// Process-wide tally of every density solve (including ones that threw),
/// used to audit conservation over a whole run.
struct FpAudit {
  long runs = 0;
  double worst_mass_drift = 0.0;
  long uniform_start_runs = 0;  // rho0 == 1 from level 0
  double min_density_uniform_start = std::numeric_limits<double>::infinity();
};

FpAudit fp_audit();
void reset_fp_audit();

/// Density started from the discrete delta (mass 1/dx^n at node y) at level s.
ScalarField fundamental_solution(const ProblemSpec& spec, const ControlField& u, int s_level,
                                 std::size_t y_node, const SolverConfig& cfg,
                                 SolverReport* report = nullptr);

/// Sensitivity of sum_x rho(start, x) V(start, x) dx^n to the control,
/// accumulated over the same substeps the solvers take.
///
/// Within each substep the contribution is -delta * rho * grad_u G evaluated
/// with the density entering the substep and the value leaving it; it is
/// distributed to the two bracketing levels with the control's interpolation
/// weights and divided by the trapezoid weight, which yields the L^2
/// gradient of the discrete functional. Levels before start_level are zero.
/// `density` must come from solve_fp_from with the same start and `value`
/// from solve_hj, both for `u` and `cfg`.
ControlField adjoint_gradient(const ProblemSpec& spec, const ControlField& u,
                              const ScalarField& value, const ScalarField& density,
                              int start_level, const SolverConfig& cfg);

}  // namespace pgflow
