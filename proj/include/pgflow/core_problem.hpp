#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Dense>

namespace pgflow {

/// Largest supported state, control and noise dimension. Small vectors and
/// matrices are stack allocated up to this size.
inline constexpr int kMaxDim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// Derivative of the diffusion matrix with respect to each control
/// coordinate: entry k is the n x m matrix d(sigma)/d(u_k).
using SigmaJacobian = std::array<Mat, kMaxDim>;

/// Flat torus [0,1)^n with control dimension n' and noise dimension m.
struct TorusGeometry {
  int dim_state = 1;
  int dim_control = 1;
  int dim_noise = 1;

  static constexpr double kPeriod = 1.0;

  /// Throws std::invalid_argument unless 1 <= n, n', m <= kMaxDim.
  void validate() const;
};

/// Maps each coordinate into [0,1).
Vec wrap(const Vec& x);
double wrap(double x);

/// Minimal-image displacement a - b on the torus, each coordinate in [-1/2, 1/2].
Vec torus_displacement(const Vec& a, const Vec& b);

// Coefficient callbacks. Time enters only through manufactured test problems;
// the time-invariant problems ignore it.
using DriftFn = std::function<Vec(double t, const Vec& x, const Vec& u)>;
using DiffusionFn = std::function<Mat(double t, const Vec& x, const Vec& u)>;
using RunningCostFn = std::function<double(double t, const Vec& x, const Vec& u)>;
using TerminalCostFn = std::function<double(const Vec& x)>;
using DriftJacobianFn = std::function<Mat(double t, const Vec& x, const Vec& u)>;
using DiffusionJacobianFn = std::function<SigmaJacobian(double t, const Vec& x, const Vec& u)>;
using CostGradientFn = std::function<Vec(double t, const Vec& x, const Vec& u)>;

/// A controlled diffusion problem on the torus.
///
/// The drift returns R^n, the diffusion R^{n x m}, the drift Jacobian
/// R^{n x n'} and the cost gradient R^{n'}. Only u-derivatives are needed.
/// sigma0, mu_G and bound_K are declared by the problem author and spot
/// checked by check_problem(); they are never inferred.
struct ProblemSpec {
  std::string name;
  TorusGeometry geometry;

  DriftFn drift;
  DiffusionFn diffusion;
  RunningCostFn running_cost;
  TerminalCostFn terminal_cost;

  DriftJacobianFn grad_u_drift;
  DiffusionJacobianFn grad_u_diffusion;
  CostGradientFn grad_u_running_cost;

  double sigma0 = 0.0;
  double mu_G = 0.0;
  double bound_K = 1.0;
  /// Box |u_i| <= u_box used for diagnostics and the argmax box check.
  double u_box = 5.0;

  bool has_u_derivatives() const {
    return grad_u_drift && grad_u_diffusion && grad_u_running_cost;
  }
};

/// Adjoint pair p = -grad V and P = -hess V.
struct CoState {
  Vec p;
  Mat P;

  /// Builds the co-state from a value gradient and Hessian (sign flipped,
  /// Hessian symmetrized).
  static CoState from_value_derivatives(const Vec& grad_v, const Mat& hess_v);
};

/// D = 1/2 sigma sigma^T.
Mat eval_D(const ProblemSpec& spec, double t, const Vec& x, const Vec& u);

/// Generalized Hamiltonian Tr(P D) + <p, b> - r.
double eval_G(const ProblemSpec& spec, double t, const Vec& x, const Vec& u, const CoState& cs);

/// First-order Hamiltonian Tr(q^T sigma) + <p, b> - r with q in R^{n x m}.
double eval_H(const ProblemSpec& spec, double t, const Vec& x, const Vec& u, const Vec& p,
              const Mat& q);

/// Analytic u-gradient of G assembled from the coefficient derivatives.
Vec grad_u_G(const ProblemSpec& spec, double t, const Vec& x, const Vec& u, const CoState& cs);

/// Step used by hess_u_G for the central difference of grad_u_G.
inline constexpr double kHessianStep = 1e-4;

/// u-Hessian of G by central differences of grad_u_G, symmetrized.
Mat hess_u_G(const ProblemSpec& spec, double t, const Vec& x, const Vec& u, const CoState& cs);

/// Outcome of spot-checking a problem's declared properties.
struct ProblemCheck {
  double max_derivative_rel_error = 0.0;  // grad_u_G vs central FD of eval_G
  double min_eigenvalue_D = 0.0;          // over all probes
  double max_eigenvalue_hess_G = 0.0;     // over all probes
  bool ellipticity_ok = false;            // min eig D >= sigma0 - 1e-12
  bool derivatives_ok = false;            // rel error < 1e-5
  bool concavity_ok = false;              // vacuous when mu_G == 0
};

/// Probes random (t, x, u, p, P) with |u_i| <= u_box and t in [0, horizon].
ProblemCheck check_problem(const ProblemSpec& spec, double horizon, int n_probes,
                           std::uint64_t seed);

}  // namespace pgflow
