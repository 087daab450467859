#include "pgflow/pde_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pgflow/errors.hpp"

namespace pgflow {

void SolverConfig::validate() const {
  if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) {
    throw std::invalid_argument("cfl_safety must lie in (0, 1]");
  }
  if (max_substeps_per_level < 1) throw std::invalid_argument("max_substeps_per_level must be >= 1");
  if (!(mass_tolerance > 0.0)) throw std::invalid_argument("mass_tolerance must be positive");
}

std::string SolverReport::csv_header() {
  return "substeps_used,mass_drift_max,min_density,cfl_limit,positivity_warning";
}

std::string SolverReport::csv_row() const {
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  std::ostringstream os;
  os << substeps_used << ',' << num(mass_drift_max) << ',' << num(min_density) << ','
     << num(cfl_limit) << ',' << (positivity_warning ? 1 : 0);
  return os.str();
}

long SubstepPlan::total() const {
  return std::accumulate(per_interval.begin(), per_interval.end(), 0L);
}

namespace {

void require_compatible(const ProblemSpec& spec, const ControlField& u) {
  const auto& g = u.grid().geometry();
  if (g.dim_state != spec.geometry.dim_state || g.dim_control != spec.geometry.dim_control) {
    throw std::invalid_argument("control grid does not match problem dimensions");
  }
  if (!u.all_finite()) throw NumericError("control field contains non-finite entries");
}

std::vector<Vec> node_positions(const SpaceTimeGrid& grid) {
  std::vector<Vec> xs(grid.nodes());
  for (std::size_t i = 0; i < grid.nodes(); ++i) xs[i] = grid.node_position(i);
  return xs;
}

Vec blended_control(const ControlField& u, int level, std::size_t node, double theta) {
  const int nc = u.components();
  Vec v(nc);
  for (int k = 0; k < nc; ++k) {
    const double lo = u.component(level, node, k);
    const double hi = u.component(level + 1, node, k);
    v[k] = theta == 0.0 ? lo : (1.0 - theta) * lo + theta * hi;
  }
  return v;
}

/// Drift, diffusion and running cost at every node for one substep.
struct SliceCoefficients {
  int n = 1;
  std::vector<double> drift;      // [node][axis]
  std::vector<double> diffusion;  // [node][row][col]
  std::vector<double> cost;       // [node]
  std::vector<Vec> control;       // [node]

  SliceCoefficients(const SpaceTimeGrid& grid)
      : n(grid.dim()),
        drift(grid.nodes() * n),
        diffusion(grid.nodes() * n * n),
        cost(grid.nodes()),
        control(grid.nodes()) {}

  void evaluate(const ProblemSpec& spec, const ControlField& u, const std::vector<Vec>& xs,
                int level, double theta, double t) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      control[i] = blended_control(u, level, i, theta);
      const Vec b = spec.drift(t, xs[i], control[i]);
      const Mat s = spec.diffusion(t, xs[i], control[i]);
      const double r = spec.running_cost(t, xs[i], control[i]);
      if (b.size() != n || s.rows() != n || s.cols() != spec.geometry.dim_noise) {
        throw std::invalid_argument("coefficient callback returned wrong shape");
      }
      const Mat d = 0.5 * s * s.transpose();
      for (int a = 0; a < n; ++a) {
        drift[i * n + a] = b[a];
        for (int c = 0; c < n; ++c) diffusion[(i * n + a) * n + c] = d(a, c);
      }
      cost[i] = r;
      if (!std::isfinite(r) || !b.allFinite() || !d.allFinite()) {
        throw NumericError("non-finite coefficient at t=" + std::to_string(t) + " node " +
                           std::to_string(i));
      }
    }
  }
};

double substep_time(const SpaceTimeGrid& grid, int level, int s, int count) {
  const double t0 = grid.time(level);
  return t0 + (s + 0.5) * (grid.time(level + 1) - t0) / count;
}

/// One backward substep: out = w - delta * G(-grad w, -hess w).
void hj_substep(const SpaceTimeGrid& grid, const SliceCoefficients& c, double delta,
                std::span<const double> w, std::span<double> out) {
  const int n = grid.dim();
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    const Vec g = gradient_at(grid, w, i);
    const Mat h = hessian_at(grid, w, i);
    double lv = c.cost[i];
    for (int a = 0; a < n; ++a) {
      lv += c.drift[i * n + a] * g[a];
      for (int b = 0; b < n; ++b) lv += c.diffusion[(i * n + a) * n + b] * h(a, b);
    }
    out[i] = w[i] + delta * lv;
    if (!std::isfinite(out[i])) throw NumericError("non-finite value update at node " + std::to_string(i));
  }
}

/// One forward substep of the transpose operator in flux form.
void fp_substep(const SpaceTimeGrid& grid, const SliceCoefficients& c, double delta,
                std::span<const double> rho, std::span<double> out, std::vector<double>& scratch) {
  const int n = grid.dim();
  const std::size_t nodes = grid.nodes();
  const double inv2dx = 0.5 / grid.dx();
  const double invdx2 = 1.0 / (grid.dx() * grid.dx());
  // scratch: [node][0..n) advective flux b*rho, then [node][n + a*n + b] D_ab*rho
  const int width = n + n * n;
  scratch.resize(nodes * width);
  for (std::size_t i = 0; i < nodes; ++i) {
    for (int a = 0; a < n; ++a) scratch[i * width + a] = c.drift[i * n + a] * rho[i];
    for (int a = 0; a < n * n; ++a) scratch[i * width + n + a] = c.diffusion[i * n * n + a] * rho[i];
  }
  auto q = [&](std::size_t node, int a, int b) { return scratch[node * width + n + a * n + b]; };
  for (std::size_t i = 0; i < nodes; ++i) {
    double rhs = 0.0;
    for (int a = 0; a < n; ++a) {
      const std::size_t ip = grid.neighbor(i, a, 1);
      const std::size_t im = grid.neighbor(i, a, -1);
      rhs -= (scratch[ip * width + a] - scratch[im * width + a]) * inv2dx;
      rhs += (q(ip, a, a) - 2.0 * q(i, a, a) + q(im, a, a)) * invdx2;
      for (int b = a + 1; b < n; ++b) {
        // D_ab and D_ba share the symmetric mixed stencil.
        const double mixed = q(grid.neighbor(ip, b, 1), a, b) - q(grid.neighbor(ip, b, -1), a, b) -
                             q(grid.neighbor(im, b, 1), a, b) + q(grid.neighbor(im, b, -1), a, b);
        rhs += 2.0 * mixed * 0.25 * invdx2;
      }
    }
    out[i] = rho[i] + delta * rhs;
    if (!std::isfinite(out[i])) throw NumericError("non-finite density update at node " + std::to_string(i));
  }
}

void check_density_start(std::span<const double> initial, std::size_t nodes) {
  if (initial.size() != nodes) throw std::invalid_argument("initial density has wrong size");
  double sum = 0.0;
  for (double v : initial) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("initial density must be finite and nonnegative");
    sum += v;
  }
  const double mean = sum / static_cast<double>(nodes);
  if (std::abs(mean - 1.0) > 1e-8) {
    throw std::invalid_argument("initial density must have spatial mean 1");
  }
}

}  // namespace

SubstepPlan plan_substeps(const ProblemSpec& spec, const ControlField& u, const SolverConfig& cfg) {
  cfg.validate();
  require_compatible(spec, u);
  const SpaceTimeGrid& grid = u.grid();
  const int n = grid.dim();
  const double dx = grid.dx();
  const auto xs = node_positions(grid);

  SubstepPlan plan;
  plan.per_interval.resize(grid.n_t() - 1);
  for (int l = 0; l + 1 < grid.n_t(); ++l) {
    double d_max = 0.0;
    double b_max = 0.0;
    for (double theta : {0.0, 0.5, 1.0}) {
      const double t = grid.time(l) + theta * (grid.time(l + 1) - grid.time(l));
      for (std::size_t i = 0; i < grid.nodes(); ++i) {
        const Vec uc = blended_control(u, l, i, theta);
        const Mat d = eval_D(spec, t, xs[i], uc);
        const Vec b = spec.drift(t, xs[i], uc);
        if (!d.allFinite() || !b.allFinite()) throw NumericError("non-finite coefficient while planning substeps");
        for (int a = 0; a < n; ++a) d_max = std::max(d_max, d(a, a));
        b_max = std::max(b_max, b.cwiseAbs().sum());
      }
    }
    double limit = std::numeric_limits<double>::infinity();
    if (d_max > 0.0) limit = std::min(limit, dx * dx / (2.0 * n * d_max));
    if (b_max > 0.0) limit = std::min(limit, dx / (b_max + 1e-12));
    limit *= cfg.cfl_safety;
    plan.cfl_limit = std::min(plan.cfl_limit, limit);

    const double dt = grid.time(l + 1) - grid.time(l);
    const double ratio = std::isfinite(limit) ? dt / limit : 1.0;
    const long needed = std::max(1L, static_cast<long>(std::ceil(ratio * (1.0 - 1e-12))));
    if (needed > cfg.max_substeps_per_level) {
      throw CflFailure("interval " + std::to_string(l) + " needs " + std::to_string(needed) +
                           " substeps, limit is " + std::to_string(cfg.max_substeps_per_level),
                       needed);
    }
    plan.per_interval[l] = static_cast<int>(needed);
  }
  return plan;
}

ScalarField solve_hj(const ProblemSpec& spec, const ControlField& u, const SolverConfig& cfg,
                     SolverReport* report) {
  const SubstepPlan plan = plan_substeps(spec, u, cfg);
  const SpaceTimeGrid& grid = u.grid();
  const auto xs = node_positions(grid);
  ScalarField value(grid, FieldRole::kValue);

  auto terminal = value.slice(grid.n_t() - 1);
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    terminal[i] = spec.terminal_cost(xs[i]);
    if (!std::isfinite(terminal[i])) throw NumericError("non-finite terminal cost");
  }

  SliceCoefficients coeff(grid);
  std::vector<double> a(grid.nodes()), b(grid.nodes());
  for (int l = grid.n_t() - 2; l >= 0; --l) {
    const int count = plan.per_interval[l];
    const double delta = (grid.time(l + 1) - grid.time(l)) / count;
    std::copy(value.slice(l + 1).begin(), value.slice(l + 1).end(), a.begin());
    for (int s = count - 1; s >= 0; --s) {
      const double t = substep_time(grid, l, s, count);
      coeff.evaluate(spec, u, xs, l, (s + 0.5) / count, t);
      hj_substep(grid, coeff, delta, a, b);
      std::swap(a, b);
    }
    std::copy(a.begin(), a.end(), value.slice(l).begin());
  }

  if (report != nullptr) {
    *report = SolverReport{};
    report->substeps_used = plan.total();
    report->cfl_limit = plan.cfl_limit;
  }
  return value;
}

namespace {

std::mutex g_audit_mutex;
FpAudit g_audit;

void record_fp_run(double drift, double min_density, bool uniform_start) {
  std::lock_guard<std::mutex> lock(g_audit_mutex);
  ++g_audit.runs;
  g_audit.worst_mass_drift = std::max(g_audit.worst_mass_drift, drift);
  if (uniform_start) {
    ++g_audit.uniform_start_runs;
    g_audit.min_density_uniform_start = std::min(g_audit.min_density_uniform_start, min_density);
  }
}

}  // namespace

FpAudit fp_audit() {
  std::lock_guard<std::mutex> lock(g_audit_mutex);
  return g_audit;
}

void reset_fp_audit() {
  std::lock_guard<std::mutex> lock(g_audit_mutex);
  g_audit = FpAudit{};
}

ScalarField solve_fp_from(const ProblemSpec& spec, const ControlField& u, int start_level,
                          std::span<const double> initial, const SolverConfig& cfg,
                          SolverReport* report) {
  const SpaceTimeGrid& grid = u.grid();
  if (start_level < 0 || start_level >= grid.n_t()) throw std::invalid_argument("start level out of range");
  check_density_start(initial, grid.nodes());
  const SubstepPlan plan = plan_substeps(spec, u, cfg);
  const auto xs = node_positions(grid);

  ScalarField rho(grid, FieldRole::kDensity);
  std::copy(initial.begin(), initial.end(), rho.slice(start_level).begin());
  const double mean0 = rho.spatial_mean(start_level);
  const bool uniform_start =
      start_level == 0 && std::all_of(initial.begin(), initial.end(), [](double v) { return v == 1.0; });

  SolverReport rep;
  rep.mass_drift_max = 0.0;
  rep.min_density = *std::min_element(initial.begin(), initial.end());
  rep.cfl_limit = plan.cfl_limit;

  SliceCoefficients coeff(grid);
  std::vector<double> a(initial.begin(), initial.end()), b(grid.nodes()), scratch;
  for (int l = start_level; l + 1 < grid.n_t(); ++l) {
    const int count = plan.per_interval[l];
    const double delta = (grid.time(l + 1) - grid.time(l)) / count;
    for (int s = 0; s < count; ++s) {
      coeff.evaluate(spec, u, xs, l, (s + 0.5) / count, substep_time(grid, l, s, count));
      fp_substep(grid, coeff, delta, a, b, scratch);
      std::swap(a, b);
    }
    rep.substeps_used += count;
    std::copy(a.begin(), a.end(), rho.slice(l + 1).begin());

    const double drift = std::abs(rho.spatial_mean(l + 1) - mean0);
    rep.mass_drift_max = std::max(rep.mass_drift_max, drift);
    rep.min_density = std::min(rep.min_density, *std::min_element(a.begin(), a.end()));
    if (drift > cfg.mass_tolerance) {
      record_fp_run(drift, rep.min_density, uniform_start);
      throw ConservationFailure("density mass drift " + std::to_string(drift) + " at level " +
                                std::to_string(l + 1));
    }
  }
  rep.positivity_warning = rep.min_density < -1e-6;
  record_fp_run(rep.mass_drift_max, rep.min_density, uniform_start);
  if (report != nullptr) *report = rep;
  return rho;
}

ScalarField solve_fp(const ProblemSpec& spec, const ControlField& u,
                     std::span<const double> rho0, const SolverConfig& cfg, SolverReport* report) {
  return solve_fp_from(spec, u, 0, rho0, cfg, report);
}

ScalarField fundamental_solution(const ProblemSpec& spec, const ControlField& u, int s_level,
                                 std::size_t y_node, const SolverConfig& cfg,
                                 SolverReport* report) {
  const SpaceTimeGrid& grid = u.grid();
  if (y_node >= grid.nodes()) throw std::invalid_argument("source node out of range");
  std::vector<double> delta(grid.nodes(), 0.0);
  delta[y_node] = 1.0 / grid.cell_volume();
  return solve_fp_from(spec, u, s_level, delta, cfg, report);
}

ControlField adjoint_gradient(const ProblemSpec& spec, const ControlField& u,
                              const ScalarField& value, const ScalarField& density,
                              int start_level, const SolverConfig& cfg) {
  if (!spec.has_u_derivatives()) {
    throw UnsupportedProblem("problem '" + spec.name + "' does not provide u-derivatives");
  }
  const SpaceTimeGrid& grid = u.grid();
  if (!grid.same_shape(value.grid()) || !grid.same_shape(density.grid())) {
    throw std::invalid_argument("value/density grids do not match the control grid");
  }
  const SubstepPlan plan = plan_substeps(spec, u, cfg);
  const auto xs = node_positions(grid);
  const int nc = u.components();
  const std::size_t nodes = grid.nodes();

  ControlField acc(grid);
  SliceCoefficients coeff(grid);
  std::vector<std::vector<double>> rho_steps;
  std::vector<double> w(nodes), w_next(nodes), scratch;

  for (int l = grid.n_t() - 2; l >= start_level; --l) {
    const int count = plan.per_interval[l];
    const double delta = (grid.time(l + 1) - grid.time(l)) / count;

    // Replay the density substeps of this interval.
    rho_steps.assign(count, std::vector<double>(nodes));
    {
      auto src = density.slice(l);
      std::copy(src.begin(), src.end(), rho_steps[0].begin());
      for (int s = 0; s + 1 < count; ++s) {
        coeff.evaluate(spec, u, xs, l, (s + 0.5) / count, substep_time(grid, l, s, count));
        fp_substep(grid, coeff, delta, rho_steps[s], rho_steps[s + 1], scratch);
      }
    }

    auto src = value.slice(l + 1);
    std::copy(src.begin(), src.end(), w.begin());
    for (int s = count - 1; s >= 0; --s) {
      const double t = substep_time(grid, l, s, count);
      const double theta = (s + 0.5) / count;
      coeff.evaluate(spec, u, xs, l, theta, t);
      const auto& rho = rho_steps[s];
      for (std::size_t i = 0; i < nodes; ++i) {
        if (rho[i] == 0.0) continue;
        const CoState cs = CoState::from_value_derivatives(gradient_at(grid, w, i), hessian_at(grid, w, i));
        const Vec g = grad_u_G(spec, t, xs[i], coeff.control[i], cs);
        for (int k = 0; k < nc; ++k) {
          const double c = -delta * rho[i] * g[k];
          acc.component(l, i, k) += (1.0 - theta) * c;
          acc.component(l + 1, i, k) += theta * c;
        }
      }
      hj_substep(grid, coeff, delta, w, w_next);
      std::swap(w, w_next);
    }
  }

  for (int l = 0; l < grid.n_t(); ++l) {
    const double inv_w = 1.0 / grid.trapezoid_weight(l);
    for (std::size_t i = 0; i < nodes; ++i)
      for (int k = 0; k < nc; ++k) acc.component(l, i, k) *= inv_w;
  }
  return acc;
}

}  // namespace pgflow
