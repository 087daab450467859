#include "pgflow/local_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "pgflow/errors.hpp"

namespace pgflow {

void ArgmaxConfig::validate() const {
  if (!(newton_tol > 0.0) || !(tie_tol > 0.0)) throw std::invalid_argument("argmax tolerances must be positive");
  if (max_newton_iters < 1) throw std::invalid_argument("max_newton_iters must be >= 1");
}

namespace {

struct Candidate {
  Vec u;
  double value;
  double residual;
};

bool lexicographically_greater(const Vec& a, const Vec& b) {
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (a[k] != b[k]) return a[k] > b[k];
  }
  return false;
}

// Damped Newton / gradient ascent from one start point.
Candidate ascend(const ProblemSpec& spec, double t, const Vec& x, const CoState& cs, Vec u,
                 const ArgmaxConfig& cfg) {
  double value = eval_G(spec, t, x, u, cs);
  Vec grad = grad_u_G(spec, t, x, u, cs);
  for (int iter = 0; iter < cfg.max_newton_iters; ++iter) {
    const double res = grad.norm();
    if (res <= cfg.newton_tol) break;

    const Mat hess = hess_u_G(spec, t, x, u, cs);
    Eigen::LLT<Mat> llt(-hess);
    const bool newton = llt.info() == Eigen::Success;
    const Vec dir = newton ? Vec(llt.solve(grad)) : grad;
    const double slope = grad.dot(dir);

    bool accepted = false;
    double alpha = 1.0;
    for (int bt = 0; bt < 60 && !accepted; ++bt, alpha *= 0.5) {
      const Vec trial = u + alpha * dir;
      double trial_value;
      Vec trial_grad;
      try {
        trial_value = eval_G(spec, t, x, trial, cs);
        trial_grad = grad_u_G(spec, t, x, trial, cs);
      } catch (const NumericError&) {
        continue;
      }
      const bool armijo = trial_value >= value + 1e-4 * alpha * slope;
      // Close to the root G stalls at round-off; a Newton step that shrinks
      // the gradient is still progress.
      const bool newton_progress = newton && trial_grad.norm() < res &&
                                   trial_value >= value - 1e-12 * (1.0 + std::abs(value));
      if (armijo || newton_progress) {
        u = trial;
        value = trial_value;
        grad = trial_grad;
        accepted = true;
      }
    }
    if (!accepted) break;
  }
  return {u, value, grad.norm()};
}

std::vector<Vec> start_points(const Vec& incumbent, const ArgmaxConfig& cfg) {
  std::vector<Vec> starts;
  if (cfg.incumbent_only) {
    starts.push_back(incumbent);
    return starts;
  }
  starts.push_back(incumbent);
  if (cfg.multistart_offsets.empty()) {
    for (Eigen::Index k = 0; k < incumbent.size(); ++k) {
      Vec e = Vec::Zero(incumbent.size());
      e[k] = 1.0;
      starts.push_back(incumbent + e);
      starts.push_back(incumbent - e);
    }
  } else {
    for (const Vec& off : cfg.multistart_offsets) {
      if (off.size() != incumbent.size()) throw std::invalid_argument("multistart offset has wrong dimension");
      starts.push_back(incumbent + off);
    }
  }
  return starts;
}

std::string node_label(int level, std::size_t node) {
  return "level " + std::to_string(level) + ", node " + std::to_string(node);
}

}  // namespace

ArgmaxResult argmax_G(const ProblemSpec& spec, double t, const Vec& x, const CoState& cs,
                      const Vec& incumbent, const ArgmaxConfig& cfg) {
  cfg.validate();
  if (incumbent.size() != spec.geometry.dim_control) {
    throw std::invalid_argument("incumbent control has wrong dimension");
  }

  std::vector<Candidate> converged;
  double best_residual = std::numeric_limits<double>::infinity();
  for (const Vec& start : start_points(incumbent, cfg)) {
    Candidate c = ascend(spec, t, x, cs, start, cfg);
    best_residual = std::min(best_residual, c.residual);
    if (c.residual <= cfg.newton_tol) converged.push_back(std::move(c));
  }
  if (converged.empty()) {
    throw ArgmaxFailure("no start point converged; best |grad_u G| = " + std::to_string(best_residual),
                        best_residual);
  }

  double best_value = -std::numeric_limits<double>::infinity();
  for (const Candidate& c : converged) best_value = std::max(best_value, c.value);

  const Candidate* winner = nullptr;
  bool tie = false;
  for (const Candidate& c : converged) {
    if (c.value < best_value - cfg.tie_tol) continue;
    if (winner == nullptr) {
      winner = &c;
    } else {
      if ((c.u - winner->u).norm() > 1e-6) tie = true;
      if (lexicographically_greater(c.u, winner->u)) winner = &c;
    }
  }

  if (winner->u.cwiseAbs().maxCoeff() > spec.u_box) {
    throw BoxViolation("maximizer leaves the control box |u| <= " + std::to_string(spec.u_box));
  }
  return {winner->u, winner->value, winner->residual, tie};
}

ControlField local_optimal_field(const ProblemSpec& spec, const ControlField& u,
                                 const ScalarField& value, const ArgmaxConfig& cfg) {
  const SpaceTimeGrid& grid = u.grid();
  if (!grid.same_shape(value.grid())) throw std::invalid_argument("value and control grids differ");
  ControlField out(grid);
  for (int l = 0; l < grid.n_t(); ++l) {
    const double t = grid.time(l);
    const auto slice = value.slice(l);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
      const CoState cs =
          CoState::from_value_derivatives(gradient_at(grid, slice, i), hessian_at(grid, slice, i));
      try {
        out.set(l, i, argmax_G(spec, t, grid.node_position(i), cs, u.at(l, i), cfg).u);
      } catch (const ArgmaxFailure& e) {
        throw ArgmaxFailure(std::string(e.what()) + " at " + node_label(l, i), e.best_residual());
      } catch (const BoxViolation& e) {
        throw BoxViolation(std::string(e.what()) + " at " + node_label(l, i));
      }
    }
  }
  return out;
}

double hjb_residual(const ProblemSpec& spec, const ScalarField& value, const ArgmaxConfig& cfg,
                    const ControlField* incumbent) {
  const SpaceTimeGrid& grid = value.grid();
  if (!value.all_finite()) throw NumericError("value field contains non-finite entries");
  if (incumbent != nullptr && !grid.same_shape(incumbent->grid())) {
    throw std::invalid_argument("incumbent grid differs from value grid");
  }
  ArgmaxConfig search = cfg;
  search.incumbent_only = false;
  const Vec zero = Vec::Zero(spec.geometry.dim_control);

  double worst = 0.0;
  for (int l = 1; l + 1 < grid.n_t(); ++l) {
    const double t = grid.time(l);
    const double span_t = grid.time(l + 1) - grid.time(l - 1);
    const auto slice = value.slice(l);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
      const double dvdt = (value.at(l + 1, i) - value.at(l - 1, i)) / span_t;
      const CoState cs =
          CoState::from_value_derivatives(gradient_at(grid, slice, i), hessian_at(grid, slice, i));
      const Vec start = incumbent != nullptr ? incumbent->at(l, i) : zero;
      double g_max;
      try {
        g_max = argmax_G(spec, t, grid.node_position(i), cs, start, search).value;
      } catch (const ArgmaxFailure& e) {
        throw ArgmaxFailure(std::string(e.what()) + " at " + node_label(l, i), e.best_residual());
      }
      worst = std::max(worst, std::abs(-dvdt + g_max));
    }
  }
  return worst;
}

QuarticBranches quartic_closed_forms(double v_x) {
  const double s = v_x >= 0.0 ? 1.0 : -1.0;
  const double root = std::sqrt(v_x * v_x + 4.0);
  return {0.5 * (-v_x - s * root), 0.5 * (-v_x + s * root)};
}

}  // namespace pgflow
