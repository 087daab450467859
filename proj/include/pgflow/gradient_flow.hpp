#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgflow/core_problem.hpp"
#include "pgflow/fields.hpp"
#include "pgflow/local_opt.hpp"
#include "pgflow/pde_solvers.hpp"

namespace pgflow {

/// J = integral of rho(0) V(0) over the torus (rectangle rule).
double cost_J(const ScalarField& value, std::span<const double> rho0);

/// J through the density instead of the value: running cost against rho
/// (trapezoid in time) plus terminal cost against rho(T). Agrees with cost_J
/// up to the time quadrature error.
double cost_from_density(const ProblemSpec& spec, const ControlField& u, const ScalarField& rho);

/// Uniform initial density, rho0 = 1.
std::vector<double> uniform_density(const SpaceTimeGrid& grid);

/// -rho * grad_u G evaluated at the grid levels with the co-state from the
/// central differences of V. The flow itself uses functional_gradient, which
/// integrates the same expression over the solver substeps.
ControlField nodal_gradient(const ProblemSpec& spec, const ControlField& u,
                            const ScalarField& value, const ScalarField& rho);

/// dJ/du = -rho grad_u G as the exact L^2 gradient of the discrete cost.
ControlField functional_gradient(const ProblemSpec& spec, const ControlField& u,
                                 const ScalarField& value, const ScalarField& rho,
                                 const SolverConfig& cfg);

/// dV(s, y)/du: the functional gradient with rho replaced by the
/// fundamental solution started at level s, node y. Zero before level s.
ControlField value_sensitivity(const ProblemSpec& spec, const ControlField& u,
                               const ScalarField& value, int s_level, std::size_t y_node,
                               const SolverConfig& cfg);

struct ArmijoConfig {
  bool enabled = true;
  double shrink = 0.5;
  double slope = 1e-4;
  int max_halvings = 20;
};

struct FlowConfig {
  double dtau = 0.1;
  int max_steps = 100;
  double stop_grad_norm = 1e-6;
  int stall_window = 10;            // 0 disables the stall test
  double stall_min_decrease = 0.0;  // J(k-W) - J(k) below this stops the run
  ArmijoConfig armijo;
  /// When non-negative, a step is also halved until V_new <= V_old + tol
  /// at every node.
  double value_monotonicity_tol = -1.0;
  int hjb_every = 0;  // sample the HJB residual every k steps; 0 never
  SolverConfig solver;
  ArgmaxConfig argmax;  // for dist_to_local; incumbent_only is honored

  void validate() const;
};

/// A control with its value, density, cost and gradient, all consistent.
struct FlowState {
  double tau = 0.0;
  ControlField u;
  ScalarField value;
  ScalarField rho;
  ControlField gradient;  // dJ/du
  double J = 0.0;
  double grad_norm = 0.0;      // ||dJ/du||_{L^2}
  double dist_to_local = 0.0;  // ||u - u_diamond||_{L^2}
};

FlowState make_flow_state(const ProblemSpec& spec, ControlField u, const FlowConfig& cfg,
                          double tau = 0.0);

struct StepResult {
  FlowState state;
  double accepted_dtau = 0.0;
  int halvings = 0;
  double max_value_increase = 0.0;  // max over nodes of V_new - V_old
};

/// u <- u - dtau * dJ/du with Armijo backtracking. Throws StepFailure when
/// max_halvings are exhausted without sufficient decrease.
StepResult flow_step(const ProblemSpec& spec, const FlowState& state, const FlowConfig& cfg);

struct TraceRecord {
  int step = 0;
  double tau = 0.0;
  double J = 0.0;
  double grad_norm = 0.0;
  double dist_to_local = 0.0;
  double accepted_dtau = 0.0;
  double hjb_residual = std::numeric_limits<double>::quiet_NaN();
  double max_value_increase = 0.0;
  double wall_ms = 0.0;
};

enum class StopReason { kGradNorm, kStall, kMaxSteps, kStepFailure };

const char* stop_reason_name(StopReason reason);

struct FlowResult {
  std::vector<TraceRecord> trace;  // record 0 is the initial state
  FlowState final_state;
  StopReason reason = StopReason::kMaxSteps;
  std::string failure;  // message when reason == kStepFailure
};

FlowResult run_flow(const ProblemSpec& spec, const ControlField& u0, const FlowConfig& cfg);

std::string trace_csv_header();
std::string trace_csv_row(const TraceRecord& r);

struct PlDiagnostics {
  double grad_norm_sq = 0.0;
  double J_gap = 0.0;                // J - J* (or J - J_best when u* unknown)
  std::optional<double> dist_ratio;  // ||u - u_diamond|| / ||u - u*||
};

/// With u_star, J* = J[u_star]; otherwise J_best is used as the reference.
PlDiagnostics pl_diagnostics(const ProblemSpec& spec, const FlowState& state,
                             const ControlField* u_star, double J_best, const FlowConfig& cfg);

}  // namespace pgflow
