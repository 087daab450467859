#include "pgflow/problems.hpp"

#include <cmath>
#include <numbers>

#include "pgflow/errors.hpp"

namespace pgflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec scalar_vec(double v) {
  Vec out(1);
  out[0] = v;
  return out;
}

Mat scalar_mat(double v) {
  Mat out(1, 1);
  out(0, 0) = v;
  return out;
}

SigmaJacobian scalar_sigma_jacobian(double v) {
  SigmaJacobian j;
  j[0] = scalar_mat(v);
  return j;
}

TorusGeometry scalar_geometry() { return TorusGeometry{1, 1, 1}; }

// b = u^3/3, sigma = sqrt(2), r = u^4/4 - u^2/2, h = a cos(2 pi x).
ProblemSpec quartic_trap(const ProblemOptions& opt) {
  const double a = opt.terminal_amplitude;
  ProblemSpec p;
  p.name = "quartic_trap";
  p.geometry = scalar_geometry();
  p.drift = [](double, const Vec&, const Vec& u) { return scalar_vec(u[0] * u[0] * u[0] / 3.0); };
  p.diffusion = [](double, const Vec&, const Vec&) { return scalar_mat(std::numbers::sqrt2); };
  p.running_cost = [](double, const Vec&, const Vec& u) {
    const double u2 = u[0] * u[0];
    return 0.25 * u2 * u2 - 0.5 * u2;
  };
  p.terminal_cost = [a](const Vec& x) { return a * std::cos(kTwoPi * x[0]); };
  p.grad_u_drift = [](double, const Vec&, const Vec& u) { return scalar_mat(u[0] * u[0]); };
  p.grad_u_diffusion = [](double, const Vec&, const Vec&) { return scalar_sigma_jacobian(0.0); };
  p.grad_u_running_cost = [](double, const Vec&, const Vec& u) {
    return scalar_vec(u[0] * u[0] * u[0] - u[0]);
  };
  p.sigma0 = 1.0;
  p.mu_G = 0.0;
  p.bound_K = 5.0;
  return p;
}

// b = u, sigma = sqrt(2), r = u^2/2 + r0(t, x), h = V*(T, .).
ProblemSpec manufactured_concave(const ProblemOptions& opt) {
  const double horizon = opt.horizon > 0.0 ? opt.horizon : default_horizon("manufactured_concave");
  const ManufacturedSolution sol(opt.manufactured_amplitude, horizon);
  ProblemSpec p;
  p.name = "manufactured_concave";
  p.geometry = scalar_geometry();
  p.drift = [](double, const Vec&, const Vec& u) { return scalar_vec(u[0]); };
  p.diffusion = [](double, const Vec&, const Vec&) { return scalar_mat(std::numbers::sqrt2); };
  p.running_cost = [sol](double t, const Vec& x, const Vec& u) {
    return 0.5 * u[0] * u[0] + sol.running_remainder(t, x[0]);
  };
  p.terminal_cost = [sol](const Vec& x) { return sol.value(sol.horizon(), x[0]); };
  p.grad_u_drift = [](double, const Vec&, const Vec&) { return scalar_mat(1.0); };
  p.grad_u_diffusion = [](double, const Vec&, const Vec&) { return scalar_sigma_jacobian(0.0); };
  p.grad_u_running_cost = [](double, const Vec&, const Vec& u) { return scalar_vec(u[0]); };
  p.sigma0 = 1.0;
  p.mu_G = 1.0;
  p.bound_K = 5.0;
  return p;
}

// D(u) = 0.5 + 0.25 tanh(u)^2, b = u, r = u^2 + 0.1 (1 - cos 2 pi x), h = 0.
ProblemSpec controlled_diffusion_demo() {
  ProblemSpec p;
  p.name = "controlled_diffusion_demo";
  p.geometry = scalar_geometry();
  auto sigma_of = [](double u) {
    const double th = std::tanh(u);
    return std::sqrt(2.0 * (0.5 + 0.25 * th * th));
  };
  p.drift = [](double, const Vec&, const Vec& u) { return scalar_vec(u[0]); };
  p.diffusion = [sigma_of](double, const Vec&, const Vec& u) { return scalar_mat(sigma_of(u[0])); };
  p.running_cost = [](double, const Vec& x, const Vec& u) {
    return u[0] * u[0] + 0.1 * (1.0 - std::cos(kTwoPi * x[0]));
  };
  p.terminal_cost = [](const Vec&) { return 0.0; };
  p.grad_u_drift = [](double, const Vec&, const Vec&) { return scalar_mat(1.0); };
  p.grad_u_diffusion = [sigma_of](double, const Vec&, const Vec& u) {
    // sigma^2 = 1 + tanh^2/2, so sigma' = tanh sech^2 / (2 sigma)
    const double th = std::tanh(u[0]);
    return scalar_sigma_jacobian(th * (1.0 - th * th) / (2.0 * sigma_of(u[0])));
  };
  p.grad_u_running_cost = [](double, const Vec&, const Vec& u) { return scalar_vec(2.0 * u[0]); };
  p.sigma0 = 0.5;
  p.mu_G = 0.0;
  p.bound_K = 5.0;
  return p;
}

}  // namespace

std::vector<std::string> builtin_problem_names() {
  return {"quartic_trap", "manufactured_concave", "controlled_diffusion_demo"};
}

double default_horizon(const std::string& name) {
  if (name == "quartic_trap") return 0.2;
  if (name == "manufactured_concave") return 0.5;
  if (name == "controlled_diffusion_demo") return 0.5;
  throw NotFound("unknown problem '" + name + "'");
}

ProblemSpec build_problem(const std::string& name, const ProblemOptions& options) {
  if (name == "quartic_trap") return quartic_trap(options);
  if (name == "manufactured_concave") return manufactured_concave(options);
  if (name == "controlled_diffusion_demo") return controlled_diffusion_demo();
  throw NotFound("unknown problem '" + name + "'");
}

ProblemSpec constant_problem(const ConstantCoefficients& c) {
  ProblemSpec p;
  p.name = "constant";
  p.geometry = scalar_geometry();
  p.drift = [b = c.drift](double, const Vec&, const Vec&) { return scalar_vec(b); };
  p.diffusion = [s = c.sigma](double, const Vec&, const Vec&) { return scalar_mat(s); };
  p.running_cost = [r = c.running_cost](double, const Vec&, const Vec&) { return r; };
  p.terminal_cost = [h = c.terminal_cost](const Vec&) { return h; };
  p.grad_u_drift = [](double, const Vec&, const Vec&) { return scalar_mat(0.0); };
  p.grad_u_diffusion = [](double, const Vec&, const Vec&) { return scalar_sigma_jacobian(0.0); };
  p.grad_u_running_cost = [](double, const Vec&, const Vec&) { return scalar_vec(0.0); };
  p.sigma0 = 0.5 * c.sigma * c.sigma;
  p.mu_G = 0.0;
  p.bound_K = std::max({1.0, std::abs(c.drift), std::abs(c.sigma)});
  return p;
}

double ManufacturedSolution::value(double t, double x) const {
  return amplitude_ * std::exp(-t) * std::cos(kTwoPi * x);
}

double ManufacturedSolution::value_t(double t, double x) const { return -value(t, x); }

double ManufacturedSolution::value_x(double t, double x) const {
  return -kTwoPi * amplitude_ * std::exp(-t) * std::sin(kTwoPi * x);
}

double ManufacturedSolution::value_xx(double t, double x) const {
  return -kTwoPi * kTwoPi * value(t, x);
}

double ManufacturedSolution::running_remainder(double t, double x) const {
  const double vx = value_x(t, x);
  return -value_t(t, x) - value_xx(t, x) + 0.5 * vx * vx;
}

}  // namespace pgflow
