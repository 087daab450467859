#pragma once

#include <optional>
#include <vector>

#include "pgflow/core_problem.hpp"
#include "pgflow/fields.hpp"

namespace pgflow {

struct ArgmaxConfig {
  double newton_tol = 1e-10;  // on |grad_u G|
  int max_newton_iters = 50;
  /// Offsets added to the incumbent. Empty means {0, +e_k, -e_k} for every axis.
  std::vector<Vec> multistart_offsets;
  double tie_tol = 1e-9;
  /// Search from the incumbent only. This reproduces the local character of
  /// the gradient flow: a control sitting in a non-global well stays there.
  bool incumbent_only = false;

  void validate() const;
};

struct ArgmaxResult {
  Vec u;
  double value = 0.0;     // G at u
  double residual = 0.0;  // |grad_u G| at u
  bool tie_broken = false;
};

/// Maximizes G(t, x, ., p, P) by damped Newton from every start point,
/// falling back to backtracking gradient ascent where the Hessian is not
/// negative definite. Returns the converged candidate with the largest G;
/// ties within tie_tol go to the lexicographically largest control.
///
/// Throws ArgmaxFailure when no start converges and BoxViolation when the
/// winner leaves the problem's u_box.
ArgmaxResult argmax_G(const ProblemSpec& spec, double t, const Vec& x, const CoState& cs,
                      const Vec& incumbent, const ArgmaxConfig& cfg);

/// u-diamond: argmax_G at every node with the co-state from the central
/// differences of V and the incumbent taken from u.
ControlField local_optimal_field(const ProblemSpec& spec, const ControlField& u,
                                 const ScalarField& value, const ArgmaxConfig& cfg);

/// max over interior levels and all nodes of |-dV/dt + sup_u G|, with dV/dt
/// by central differences in time and the sup from a full multistart search
/// (offsets around zero, or around `incumbent` when given).
double hjb_residual(const ProblemSpec& spec, const ScalarField& value, const ArgmaxConfig& cfg,
                    const ControlField* incumbent = nullptr);

/// Closed-form minimizers of g(u; V_x) = u^4/4 + V_x u^3/3 - u^2/2.
struct QuarticBranches {
  double u_star;   // global minimizer of g
  double u_tilde;  // the other local minimizer
};

/// sign(0) is taken as +1.
QuarticBranches quartic_closed_forms(double v_x);

}  // namespace pgflow
