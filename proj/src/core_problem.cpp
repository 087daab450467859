#include "pgflow/core_problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "pgflow/errors.hpp"

namespace pgflow {

namespace {

void require_dims(const ProblemSpec& spec, const Vec& x, const Vec& u) {
  if (x.size() != spec.geometry.dim_state || u.size() != spec.geometry.dim_control) {
    throw std::invalid_argument("dimension mismatch: expected x in R^" +
                                std::to_string(spec.geometry.dim_state) + ", u in R^" +
                                std::to_string(spec.geometry.dim_control));
  }
}

void require_costate(const ProblemSpec& spec, const CoState& cs) {
  const int n = spec.geometry.dim_state;
  if (cs.p.size() != n || cs.P.rows() != n || cs.P.cols() != n) {
    throw std::invalid_argument("co-state dimension mismatch");
  }
}

void require_derivatives(const ProblemSpec& spec) {
  if (!spec.has_u_derivatives()) {
    throw UnsupportedProblem("problem '" + spec.name + "' does not provide u-derivatives");
  }
}

Mat sigma_checked(const ProblemSpec& spec, double t, const Vec& x, const Vec& u) {
  Mat sigma = spec.diffusion(t, x, u);
  if (sigma.rows() != spec.geometry.dim_state || sigma.cols() != spec.geometry.dim_noise) {
    throw std::invalid_argument("diffusion callback returned wrong shape");
  }
  return sigma;
}

double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
  return v;
}

}  // namespace

void TorusGeometry::validate() const {
  auto ok = [](int d) { return d >= 1 && d <= kMaxDim; };
  if (!ok(dim_state) || !ok(dim_control) || !ok(dim_noise)) {
    throw std::invalid_argument("torus dimensions must lie in [1, " + std::to_string(kMaxDim) +
                                "]");
  }
}

double wrap(double x) {
  double w = x - std::floor(x);
  // floor can round x - floor(x) up to exactly 1 for tiny negative x.
  return w >= 1.0 ? 0.0 : w;
}

Vec wrap(const Vec& x) {
  Vec out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = wrap(x[i]);
  return out;
}

Vec torus_displacement(const Vec& a, const Vec& b) {
  Vec d = a - b;
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] -= std::round(d[i]);
  return d;
}

CoState CoState::from_value_derivatives(const Vec& grad_v, const Mat& hess_v) {
  CoState cs;
  cs.p = -grad_v;
  cs.P = -0.5 * (hess_v + hess_v.transpose());
  return cs;
}

Mat eval_D(const ProblemSpec& spec, double t, const Vec& x, const Vec& u) {
  require_dims(spec, x, u);
  const Mat sigma = sigma_checked(spec, t, x, u);
  return 0.5 * sigma * sigma.transpose();
}

double eval_G(const ProblemSpec& spec, double t, const Vec& x, const Vec& u, const CoState& cs) {
  require_dims(spec, x, u);
  require_costate(spec, cs);
  const Mat sigma = sigma_checked(spec, t, x, u);
  const Vec b = spec.drift(t, x, u);
  const double r = spec.running_cost(t, x, u);
  // Tr(P D) with D = 1/2 sigma sigma^T
  const double trace_term = 0.5 * (cs.P * sigma).cwiseProduct(sigma).sum();
  return checked(trace_term + cs.p.dot(b) - r, "generalized Hamiltonian");
}

double eval_H(const ProblemSpec& spec, double t, const Vec& x, const Vec& u, const Vec& p,
              const Mat& q) {
  require_dims(spec, x, u);
  if (p.size() != spec.geometry.dim_state || q.rows() != spec.geometry.dim_state ||
      q.cols() != spec.geometry.dim_noise) {
    throw std::invalid_argument("adjoint dimension mismatch");
  }
  const Mat sigma = sigma_checked(spec, t, x, u);
  const Vec b = spec.drift(t, x, u);
  const double r = spec.running_cost(t, x, u);
  return checked(q.cwiseProduct(sigma).sum() + p.dot(b) - r, "Hamiltonian");
}

Vec grad_u_G(const ProblemSpec& spec, double t, const Vec& x, const Vec& u, const CoState& cs) {
  require_derivatives(spec);
  require_dims(spec, x, u);
  require_costate(spec, cs);
  const int nc = spec.geometry.dim_control;

  const Mat sigma = sigma_checked(spec, t, x, u);
  const Mat db = spec.grad_u_drift(t, x, u);
  const SigmaJacobian dsigma = spec.grad_u_diffusion(t, x, u);
  const Vec dr = spec.grad_u_running_cost(t, x, u);

  Vec g(nc);
  const Mat p_sigma = cs.P * sigma;
  for (int k = 0; k < nc; ++k) {
    // d/du_k Tr(P D) = 1/2 Tr(P (S_k S^T + S S_k^T)) = <P S, S_k> for symmetric P
    const double trace_term = 0.5 * (p_sigma.cwiseProduct(dsigma[k]).sum() +
                                     (cs.P.transpose() * sigma).cwiseProduct(dsigma[k]).sum());
    g[k] = checked(trace_term + cs.p.dot(db.col(k)) - dr[k], "u-gradient of G");
  }
  return g;
}

Mat hess_u_G(const ProblemSpec& spec, double t, const Vec& x, const Vec& u, const CoState& cs) {
  const int nc = spec.geometry.dim_control;
  Mat h(nc, nc);
  for (int k = 0; k < nc; ++k) {
    Vec up = u, um = u;
    up[k] += kHessianStep;
    um[k] -= kHessianStep;
    h.col(k) = (grad_u_G(spec, t, x, up, cs) - grad_u_G(spec, t, x, um, cs)) / (2 * kHessianStep);
  }
  Mat sym = 0.5 * (h + h.transpose());
  for (Eigen::Index i = 0; i < sym.size(); ++i) checked(sym.data()[i], "u-Hessian of G");
  return sym;
}

ProblemCheck check_problem(const ProblemSpec& spec, double horizon, int n_probes,
                           std::uint64_t seed) {
  spec.geometry.validate();
  const int n = spec.geometry.dim_state;
  const int nc = spec.geometry.dim_control;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);

  ProblemCheck out;
  out.min_eigenvalue_D = std::numeric_limits<double>::infinity();
  out.max_eigenvalue_hess_G = -std::numeric_limits<double>::infinity();
  constexpr double kFdStep = 1e-6;

  for (int probe = 0; probe < n_probes; ++probe) {
    const double t = horizon * unit(gen);
    Vec x(n), u(nc), p(n);
    for (int i = 0; i < n; ++i) x[i] = unit(gen);
    for (int k = 0; k < nc; ++k) u[k] = spec.u_box * sym(gen);
    for (int i = 0; i < n; ++i) p[i] = 2.0 * sym(gen);
    Mat a(n, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = 2.0 * sym(gen);
    const CoState cs{p, 0.5 * (a + a.transpose())};

    const Mat d = eval_D(spec, t, x, u);
    Eigen::SelfAdjointEigenSolver<Mat> eig_d(d);
    out.min_eigenvalue_D = std::min(out.min_eigenvalue_D, eig_d.eigenvalues().minCoeff());

    const Vec g = grad_u_G(spec, t, x, u, cs);
    for (int k = 0; k < nc; ++k) {
      Vec up = u, um = u;
      up[k] += kFdStep;
      um[k] -= kFdStep;
      const double fd = (eval_G(spec, t, x, up, cs) - eval_G(spec, t, x, um, cs)) / (2 * kFdStep);
      const double rel = std::abs(g[k] - fd) / std::max(1.0, std::abs(fd));
      out.max_derivative_rel_error = std::max(out.max_derivative_rel_error, rel);
    }

    if (spec.mu_G > 0.0) {
      Eigen::SelfAdjointEigenSolver<Mat> eig_h(hess_u_G(spec, t, x, u, cs));
      out.max_eigenvalue_hess_G =
          std::max(out.max_eigenvalue_hess_G, eig_h.eigenvalues().maxCoeff());
    }
  }
  out.ellipticity_ok = out.min_eigenvalue_D >= spec.sigma0 - 1e-12;
  out.derivatives_ok = out.max_derivative_rel_error < 1e-5;
  out.concavity_ok = spec.mu_G <= 0.0 || out.max_eigenvalue_hess_G <= -spec.mu_G + 1e-6;
  return out;
}

}  // namespace pgflow
