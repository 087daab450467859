#include "pgflow/gradient_flow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pgflow/errors.hpp"

namespace pgflow {

double cost_J(const ScalarField& value, std::span<const double> rho0) {
  const SpaceTimeGrid& g = value.grid();
  if (rho0.size() != g.nodes()) throw std::invalid_argument("rho0 slice has wrong size");
  const auto v0 = value.slice(0);
  double s = 0.0;
  for (std::size_t i = 0; i < g.nodes(); ++i) s += rho0[i] * v0[i];
  return s * g.cell_volume();
}

double cost_from_density(const ProblemSpec& spec, const ControlField& u, const ScalarField& rho) {
  const SpaceTimeGrid& g = u.grid();
  double running = 0.0;
  for (int l = 0; l < g.n_t(); ++l) {
    const double t = g.time(l);
    double s = 0.0;
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      s += spec.running_cost(t, g.node_position(i), u.at(l, i)) * rho.at(l, i);
    }
    running += g.trapezoid_weight(l) * s;
  }
  double terminal = 0.0;
  for (std::size_t i = 0; i < g.nodes(); ++i) {
    terminal += spec.terminal_cost(g.node_position(i)) * rho.at(g.n_t() - 1, i);
  }
  return (running + terminal) * g.cell_volume();
}

std::vector<double> uniform_density(const SpaceTimeGrid& grid) {
  return std::vector<double>(grid.nodes(), 1.0);
}

ControlField nodal_gradient(const ProblemSpec& spec, const ControlField& u,
                            const ScalarField& value, const ScalarField& rho) {
  const SpaceTimeGrid& g = u.grid();
  ControlField out(g);
  for (int l = 0; l < g.n_t(); ++l) {
    const auto slice = value.slice(l);
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      const CoState cs = CoState::from_value_derivatives(gradient_at(g, slice, i), hessian_at(g, slice, i));
      out.set(l, i, -rho.at(l, i) * grad_u_G(spec, g.time(l), g.node_position(i), u.at(l, i), cs));
    }
  }
  return out;
}

ControlField functional_gradient(const ProblemSpec& spec, const ControlField& u,
                                 const ScalarField& value, const ScalarField& rho,
                                 const SolverConfig& cfg) {
  return adjoint_gradient(spec, u, value, rho, 0, cfg);
}

ControlField value_sensitivity(const ProblemSpec& spec, const ControlField& u,
                               const ScalarField& value, int s_level, std::size_t y_node,
                               const SolverConfig& cfg) {
  const ScalarField kernel = fundamental_solution(spec, u, s_level, y_node, cfg);
  return adjoint_gradient(spec, u, value, kernel, s_level, cfg);
}

// ---------------------------------------------------------------------------

void FlowConfig::validate() const {
  if (!(dtau >= 0.0)) throw std::invalid_argument("dtau must be nonnegative");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be nonnegative");
  if (stop_grad_norm < 0.0) throw std::invalid_argument("stop_grad_norm must be nonnegative");
  if (stall_window < 0) throw std::invalid_argument("stall_window must be nonnegative");
  if (armijo.enabled && !(armijo.shrink > 0.0 && armijo.shrink < 1.0)) {
    throw std::invalid_argument("armijo shrink must lie in (0, 1)");
  }
  if (armijo.max_halvings < 0) throw std::invalid_argument("armijo max_halvings must be nonnegative");
  solver.validate();
  argmax.validate();
}

FlowState make_flow_state(const ProblemSpec& spec, ControlField u, const FlowConfig& cfg, double tau) {
  const SpaceTimeGrid grid = u.grid();
  const std::vector<double> rho0 = uniform_density(grid);
  ScalarField value = solve_hj(spec, u, cfg.solver);
  ScalarField rho = solve_fp(spec, u, rho0, cfg.solver);
  ControlField gradient = functional_gradient(spec, u, value, rho, cfg.solver);
  const double J = cost_J(value, rho0);
  const double grad_norm = l2_norm(gradient);
  const ControlField local = local_optimal_field(spec, u, value, cfg.argmax);
  const double dist = l2_norm(u - local);
  return FlowState{tau,  std::move(u), std::move(value), std::move(rho), std::move(gradient),
                   J,    grad_norm,    dist};
}

StepResult flow_step(const ProblemSpec& spec, const FlowState& state, const FlowConfig& cfg) {
  cfg.validate();
  if (cfg.dtau == 0.0) return StepResult{state, 0.0, 0, 0.0};

  const std::vector<double> rho0 = uniform_density(state.u.grid());
  double dtau = cfg.dtau;
  const double g2 = state.grad_norm * state.grad_norm;
  // J is summed from O(nodes) terms; allow a few ulps of |J| of round-off.
  const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(state.J));
  const int max_tries = (cfg.armijo.enabled || cfg.value_monotonicity_tol >= 0.0) ? cfg.armijo.max_halvings : 0;
  const double shrink = cfg.armijo.enabled ? cfg.armijo.shrink : 0.5;

  for (int halvings = 0; halvings <= max_tries; ++halvings, dtau *= shrink) {
    ControlField trial = state.u - dtau * state.gradient;
    ScalarField value = solve_hj(spec, trial, cfg.solver);
    const double J = cost_J(value, rho0);

    bool ok = true;
    if (cfg.armijo.enabled) ok = J <= state.J - cfg.armijo.slope * dtau * g2 + roundoff;

    double max_increase = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < value.values().size(); ++k) {
      max_increase = std::max(max_increase, value.values()[k] - state.value.values()[k]);
    }
    if (cfg.value_monotonicity_tol >= 0.0 && max_increase > cfg.value_monotonicity_tol) ok = false;

    if (!ok) continue;

    ScalarField rho = solve_fp(spec, trial, rho0, cfg.solver);
    ControlField gradient = functional_gradient(spec, trial, value, rho, cfg.solver);
    const double grad_norm = l2_norm(gradient);
    const ControlField local = local_optimal_field(spec, trial, value, cfg.argmax);
    const double dist = l2_norm(trial - local);
    FlowState next{state.tau + dtau, std::move(trial), std::move(value), std::move(rho),
                   std::move(gradient), J, grad_norm, dist};
    return StepResult{std::move(next), dtau, halvings, max_increase};
  }
  std::ostringstream msg;
  msg << "no acceptable step after " << max_tries << " halvings (J = " << state.J
      << ", grad_norm = " << state.grad_norm << ")";
  throw StepFailure(msg.str());
}

const char* stop_reason_name(StopReason reason) {
  switch (reason) {
    case StopReason::kGradNorm: return "grad_norm";
    case StopReason::kStall: return "stall";
    case StopReason::kMaxSteps: return "maxed";
    case StopReason::kStepFailure: return "step_failure";
  }
  return "unknown";
}

FlowResult run_flow(const ProblemSpec& spec, const ControlField& u0, const FlowConfig& cfg) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };

  auto t0 = Clock::now();
  FlowResult result{{}, make_flow_state(spec, u0, cfg), StopReason::kMaxSteps, {}};
  auto record = [&](int step, double accepted, double increase, double wall) {
    const FlowState& s = result.final_state;
    TraceRecord r{step, s.tau, s.J, s.grad_norm, s.dist_to_local, accepted};
    if (cfg.hjb_every > 0 && step % cfg.hjb_every == 0) r.hjb_residual = hjb_residual(spec, s.value, cfg.argmax, &s.u);
    r.max_value_increase = increase;
    r.wall_ms = wall;
    result.trace.push_back(r);
  };
  record(0, 0.0, 0.0, ms_since(t0));

  for (int step = 1;; ++step) {
    const FlowState& s = result.final_state;
    if (s.grad_norm < cfg.stop_grad_norm) {
      result.reason = StopReason::kGradNorm;
      break;
    }
    if (cfg.stall_window > 0 && static_cast<int>(result.trace.size()) > cfg.stall_window) {
      const double drop = result.trace[result.trace.size() - 1 - cfg.stall_window].J - s.J;
      if (drop < cfg.stall_min_decrease) {
        result.reason = StopReason::kStall;
        break;
      }
    }
    if (step > cfg.max_steps) {
      result.reason = StopReason::kMaxSteps;
      break;
    }
    t0 = Clock::now();
    try {
      StepResult next = flow_step(spec, s, cfg);
      result.final_state = std::move(next.state);
      record(step, next.accepted_dtau, next.max_value_increase, ms_since(t0));
    } catch (const StepFailure& e) {
      result.reason = StopReason::kStepFailure;
      result.failure = e.what();
      break;
    }
  }
  return result;
}

std::string trace_csv_header() {
  return "tau,J,grad_norm,dist_to_local,accepted_dtau,hjb_residual,wall_ms";
}

std::string trace_csv_row(const TraceRecord& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.tau << ',' << r.J << ',' << r.grad_norm << ',' << r.dist_to_local << ','
     << r.accepted_dtau << ',';
  if (!std::isnan(r.hjb_residual)) os << r.hjb_residual;
  os.precision(6);
  os << ',' << r.wall_ms;
  return os.str();
}

PlDiagnostics pl_diagnostics(const ProblemSpec& spec, const FlowState& state,
                             const ControlField* u_star, double J_best, const FlowConfig& cfg) {
  PlDiagnostics d;
  d.grad_norm_sq = state.grad_norm * state.grad_norm;
  if (u_star == nullptr) {
    d.J_gap = state.J - J_best;
    return d;
  }
  const ScalarField v_star = solve_hj(spec, *u_star, cfg.solver);
  d.J_gap = state.J - cost_J(v_star, uniform_density(u_star->grid()));
  const double dist_star = l2_norm(state.u - *u_star);
  if (dist_star >= 1e-10) d.dist_ratio = state.dist_to_local / dist_star;
  return d;
}

}  // namespace pgflow
