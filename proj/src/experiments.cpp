#include "pgflow/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pgflow/errors.hpp"

namespace pgflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool evaluate(double value, const std::string& op, double threshold) {
  if (std::isnan(value)) return false;
  if (op == "<") return value < threshold;
  if (op == "<=") return value <= threshold;
  if (op == ">") return value > threshold;
  if (op == ">=") return value >= threshold;
  throw std::invalid_argument("unknown comparison '" + op + "'");
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void write_trace(const std::string& path, const FlowResult& result, const std::string& digest) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "# config_digest=" << digest << '\n';
  os << "# stop_reason=" << stop_reason_name(result.reason) << '\n';
  os << trace_csv_header() << '\n';
  for (const TraceRecord& r : result.trace) os << trace_csv_row(r) << '\n';
}

std::string artifact(const ArtifactOptions& art, ExperimentReport& report, const std::string& file,
                     const FlowResult& result) {
  if (art.dir.empty()) return "";
  const std::string path = art.dir + "/" + file;
  write_trace(path, result, art.config_digest);
  report.artifacts.push_back(path);
  return path;
}

Vec scalar(double v) {
  Vec out(1);
  out[0] = v;
  return out;
}

// Share of nodes where u is closer to the named branch of the closed forms,
// with V_x from central differences of the value.
double branch_fraction(const ControlField& u, const ScalarField& value, bool tilde) {
  const SpaceTimeGrid& g = u.grid();
  std::size_t hits = 0;
  for (int l = 0; l < g.n_t(); ++l) {
    const auto slice = value.slice(l);
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      const QuarticBranches br = quartic_closed_forms(gradient_at(g, slice, i)[0]);
      const double ui = u.at(l, i)[0];
      const bool near_tilde = std::abs(ui - br.u_tilde) < std::abs(ui - br.u_star);
      if (near_tilde == tilde) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(g.nodes() * g.n_t());
}

double max_step_increase(const FlowResult& r) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < r.trace.size(); ++k) worst = std::max(worst, r.trace[k].J - r.trace[k - 1].J);
  return r.trace.size() > 1 ? worst : 0.0;
}

}  // namespace

const Metric& ExperimentReport::add(const std::string& metric, double value, const std::string& op,
                                    double threshold) {
  metrics.push_back({metric, value, op, threshold, evaluate(value, op, threshold)});
  return metrics.back();
}

bool ExperimentReport::passed() const {
  return std::all_of(metrics.begin(), metrics.end(), [](const Metric& m) { return m.pass; });
}

std::string ExperimentReport::csv_header() { return "experiment,metric,value,op,threshold,verdict"; }

void ExperimentReport::write_csv(std::ostream& os) const {
  os << "# config_digest=" << config_digest << '\n';
  os << csv_header() << '\n';
  const auto old = os.precision(17);
  for (const Metric& m : metrics) {
    os << name << ',' << m.name << ',' << m.value << ',' << m.op << ',' << m.threshold << ','
       << (m.pass ? "pass" : "fail") << '\n';
  }
  os.precision(old);
}

std::string ExperimentReport::summary() const {
  std::ostringstream os;
  os << name << " [" << (passed() ? "PASS" : "FAIL") << "]\n";
  for (const Metric& m : metrics) {
    os << "  " << (m.pass ? "pass" : "FAIL") << "  " << m.name << " = " << format_number(m.value) << "  (need "
       << m.op << ' ' << format_number(m.threshold) << ")\n";
  }
  for (const std::string& a : artifacts) os << "  artifact: " << a << '\n';
  return os.str();
}

ControlField random_smooth_control(const SpaceTimeGrid& grid, std::mt19937_64& rng, double amplitude) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int n = grid.dim();
  const int nc = grid.geometry().dim_control;
  constexpr int kModes = 3;
  struct Coefficients {
    double offset;
    double slope;
    std::vector<double> cos_part;
    std::vector<double> sin_part;
  };
  std::vector<Coefficients> coeff(nc);
  for (auto& c : coeff) {
    c.offset = amplitude * unit(rng);
    c.slope = 0.5 * unit(rng);
    for (int a = 0; a < n * kModes; ++a) {
      c.cos_part.push_back(amplitude * unit(rng));
      c.sin_part.push_back(amplitude * unit(rng));
    }
  }
  const double horizon = grid.horizon();
  return ControlField::sample(grid, [&](double t, const Vec& x) {
    Vec u(nc);
    for (int k = 0; k < nc; ++k) {
      const Coefficients& c = coeff[k];
      double s = 0.0;
      for (int a = 0; a < n; ++a) {
        for (int m = 1; m <= kModes; ++m) {
          const int idx = a * kModes + m - 1;
          s += (c.cos_part[idx] * std::cos(kTwoPi * m * x[a]) + c.sin_part[idx] * std::sin(kTwoPi * m * x[a])) /
               (m * m);
        }
      }
      u[k] = c.offset + s * (1.0 + c.slope * t / horizon);
    }
    return u;
  });
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs two or more points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

ControlField manufactured_optimal_control(const SpaceTimeGrid& grid, const ManufacturedSolution& sol) {
  return ControlField::sample(grid, [&](double t, const Vec& x) { return scalar(sol.optimal_control(t, x[0])); });
}

ScalarField manufactured_value(const SpaceTimeGrid& grid, const ManufacturedSolution& sol) {
  return ScalarField::sample(grid, FieldRole::kValue, [&](double t, const Vec& x) { return sol.value(t, x[0]); });
}

// ---------------------------------------------------------------------------

FlowConfig TwoBasinConfig::default_flow() {
  FlowConfig f;
  f.dtau = 0.5;
  f.max_steps = 200;
  f.stop_grad_norm = 1e-6;
  f.stall_window = 0;
  f.argmax.incumbent_only = true;
  return f;
}

TwoBasinResult run_two_basin_experiment(const TwoBasinConfig& cfg, const ArtifactOptions& art) {
  ProblemOptions opts;
  opts.horizon = cfg.horizon;
  opts.terminal_amplitude = cfg.terminal_amplitude;
  const ProblemSpec spec = build_problem("quartic_trap", opts);
  const SpaceTimeGrid grid(spec.geometry, cfg.horizon, cfg.n_t, cfg.n_x);
  FlowConfig flow = cfg.flow;
  flow.argmax.incumbent_only = true;

  const double a = cfg.terminal_amplitude;
  const ControlField global_start = ControlField::sample(grid, [a](double, const Vec& x) {
    return scalar(quartic_closed_forms(-a * kTwoPi * std::sin(kTwoPi * x[0])).u_star);
  });

  TwoBasinResult res{{},
                     run_flow(spec, ControlField::constant(grid, scalar(1.0)), flow),
                     run_flow(spec, global_start, flow),
                     run_flow(spec, ControlField::constant(grid, scalar(-1.0)), flow)};

  ExperimentReport& rep = res.report;
  rep.name = "two_basin";
  rep.config_digest = art.config_digest;
  artifact(art, rep, "two_basin_run_a_trace.csv", res.run_a);
  artifact(art, rep, "two_basin_run_b_trace.csv", res.run_b);

  const FlowState& A = res.run_a.final_state;
  const FlowState& B = res.run_b.final_state;
  const FlowState& C = res.run_c.final_state;
  rep.add("grad_norm_run_a", A.grad_norm, "<", cfg.grad_tol);
  rep.add("grad_norm_run_b", B.grad_norm, "<", cfg.grad_tol);
  rep.add("J_run_a", A.J, ">", B.J);
  rep.add("J_gap_tilde_minus_global", A.J - B.J, ">", cfg.gap_margin);
  // Run A is a mixed state: global branch where V_x < 0, u-tilde where V_x > 0.
  rep.add("tilde_branch_share_run_a", branch_fraction(A.u, A.value, true), ">=", 0.25);
  rep.add("global_branch_share_run_b", branch_fraction(B.u, B.value, false), ">=", 0.9);
  rep.add("mirror_run_J_difference", std::abs(C.J - A.J), "<=", 1e-10);
  rep.add("dist_to_local_incumbent_run_a", A.dist_to_local, "<", cfg.grad_tol);

  ArgmaxConfig full;
  const ControlField jump = local_optimal_field(spec, A.u, A.value, full);
  rep.add("dist_to_local_multistart_run_a", l2_norm(A.u - jump), ">", 0.1);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < cfg.probes; ++k) {
    const double t = cfg.horizon * unit(rng);
    const Vec x = scalar(unit(rng));
    const double vx = 2.0 * unit(rng) - 1.0;
    const double vxx = 2.0 * unit(rng) - 1.0;
    const CoState cs = CoState::from_value_derivatives(scalar(vx), Mat::Constant(1, 1, vxx));
    const ArgmaxResult r = argmax_G(spec, t, x, cs, scalar(0.0), full);
    worst = std::max(worst, std::abs(r.u[0] - quartic_closed_forms(vx).u_star));
  }
  rep.add("argmax_vs_closed_form_max_error", worst, "<", cfg.probe_tol);
  return res;
}

// ---------------------------------------------------------------------------

FlowConfig RateConfig::default_flow() {
  FlowConfig f;
  f.dtau = 0.5;
  f.max_steps = 400;
  f.stop_grad_norm = 1e-9;
  f.stall_window = 0;
  return f;
}

RateResult run_rate_experiment(const RateConfig& cfg, const ArtifactOptions& art) {
  ProblemOptions opts;
  opts.horizon = cfg.horizon;
  opts.manufactured_amplitude = cfg.amplitude;
  const ProblemSpec spec = build_problem("manufactured_concave", opts);
  const ManufacturedSolution sol(cfg.amplitude, cfg.horizon);
  const SpaceTimeGrid grid(spec.geometry, cfg.horizon, cfg.n_t, cfg.n_x);

  RateResult res{{}, run_flow(spec, ControlField::constant(grid, scalar(cfg.initial_control)), cfg.flow)};
  const auto& trace = res.flow.trace;
  res.J_star = trace.front().J;
  for (const TraceRecord& r : trace) res.J_star = std::min(res.J_star, r.J);

  std::vector<double> taus, logs;
  for (const TraceRecord& r : trace) {
    const double gap = r.J - res.J_star;
    if (gap <= cfg.gap_floor) break;
    taus.push_back(r.tau);
    logs.push_back(std::log(gap));
  }
  const std::size_t usable = taus.size();
  const auto drop = static_cast<std::size_t>(std::floor(usable * (1.0 - cfg.fit_fraction) / 2.0));
  double c_hat = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  if (usable >= 2 * drop + 3) {
    const std::vector<double> x(taus.begin() + drop, taus.end() - drop);
    const std::vector<double> y(logs.begin() + drop, logs.end() - drop);
    const LinearFit fit = fit_line(x, y);
    c_hat = -fit.slope;
    r2 = fit.r2;
  }
  res.c_hat = c_hat;
  res.r2 = r2;

  ExperimentReport& rep = res.report;
  rep.name = "rate";
  rep.config_digest = art.config_digest;
  artifact(art, rep, "rate_trace.csv", res.flow);

  const FlowState& fin = res.flow.final_state;
  rep.add("usable_trace_points", static_cast<double>(usable), ">=", 5.0);
  rep.add("c_hat", c_hat, ">", 0.0);
  rep.add("r_squared", r2, ">", cfg.min_r2);
  rep.add("max_J_increase_per_step", max_step_increase(res.flow), "<=", cfg.monotone_tol);
  rep.add("dist_to_optimal_control", l2_norm(fin.u - manufactured_optimal_control(grid, sol)), "<",
          cfg.max_dist_star);
  rep.add("dist_to_local_optimal_control", fin.dist_to_local, "<", cfg.max_dist_local);
  return res;
}

// ---------------------------------------------------------------------------

namespace {

struct PairRatios {
  double h2_ratio = 0.0;
  double lipschitz_ratio = 0.0;
};

PairRatios pair_ratios(const ProblemSpec& spec, const SpaceTimeGrid& grid, const RegularityConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const ArgmaxConfig argmax;
  PairRatios out;
  const int n = grid.dim();
  for (int p = 0; p < cfg.pairs; ++p) {
    const ControlField u1 = random_smooth_control(grid, rng, 0.5);
    const ControlField u2 = random_smooth_control(grid, rng, 0.5);
    const ScalarField v1 = solve_hj(spec, u1, cfg.flow.solver);
    const ScalarField v2 = solve_hj(spec, u2, cfg.flow.solver);
    out.h2_ratio = std::max(out.h2_ratio, h2_norm(difference(v1, v2)) / l2_norm(u1 - u2));

    const ControlField d1 = local_optimal_field(spec, u1, v1, argmax);
    const ControlField d2 = local_optimal_field(spec, u2, v2, argmax);
    for (int l = 0; l < grid.n_t(); ++l) {
      const auto g1 = gradient_x(v1, l), g2 = gradient_x(v2, l);
      const auto h1 = hessian_x(v1, l), h2 = hessian_x(v2, l);
      for (std::size_t i = 0; i < grid.nodes(); ++i) {
        double dg = 0.0, dh = 0.0;
        for (int a = 0; a < n; ++a) dg += std::pow(g1[i * n + a] - g2[i * n + a], 2);
        for (int a = 0; a < n * n; ++a) dh += std::pow(h1[i * n * n + a] - h2[i * n * n + a], 2);
        const double denom = std::sqrt(dg) + std::sqrt(dh);
        if (denom < 1e-12) continue;
        out.lipschitz_ratio = std::max(out.lipschitz_ratio, (d1.at(l, i) - d2.at(l, i)).norm() / denom);
      }
    }
  }
  return out;
}

}  // namespace

RegularityResult run_regularity_probes(const RegularityConfig& cfg) {
  ProblemOptions opts;
  opts.horizon = cfg.horizon;
  opts.manufactured_amplitude = cfg.amplitude;
  const ProblemSpec spec = build_problem("manufactured_concave", opts);
  const ManufacturedSolution sol(cfg.amplitude, cfg.horizon);
  const SpaceTimeGrid base(spec.geometry, cfg.horizon, cfg.n_t, cfg.n_x);
  const SpaceTimeGrid fine(spec.geometry, cfg.horizon, 2 * (cfg.n_t - 1) + 1, 2 * cfg.n_x);

  RegularityResult res;
  ExperimentReport& rep = res.report;
  rep.name = "regularity";

  const PairRatios coarse = pair_ratios(spec, base, cfg);
  const PairRatios refined = pair_ratios(spec, fine, cfg);
  res.c2_ratio = coarse.h2_ratio;
  res.c2_ratio_refined = refined.h2_ratio;
  res.lipschitz_ratio = coarse.lipschitz_ratio;
  res.lipschitz_ratio_refined = refined.lipschitz_ratio;
  rep.add("h2_stability_ratio", coarse.h2_ratio, "<", std::numeric_limits<double>::infinity());
  rep.add("h2_stability_refinement_growth", refined.h2_ratio / coarse.h2_ratio, "<", cfg.max_refinement_growth);
  rep.add("maximizer_lipschitz_ratio", coarse.lipschitz_ratio, "<", std::numeric_limits<double>::infinity());
  rep.add("maximizer_lipschitz_refinement_growth", refined.lipschitz_ratio / coarse.lipschitz_ratio, "<",
          cfg.max_refinement_growth);

  // Growth around the discrete optimum of the base grid.
  const FlowResult opt = run_flow(spec, ControlField::constant(base, scalar(0.0)), cfg.flow);
  const FlowState& star = opt.final_state;
  std::mt19937_64 rng(cfg.seed + 1);
  ControlField phi = random_smooth_control(base, rng, 1.0);
  phi *= 1.0 / l2_norm(phi);
  const std::vector<double> rho0 = uniform_density(base);
  std::vector<double> log_eps, log_gap, log_h2;
  double eps = cfg.eps0;
  for (int k = 0; k < cfg.scales; ++k, eps *= cfg.eps_ratio) {
    const ControlField u = star.u + eps * phi;
    const ScalarField v = solve_hj(spec, u, cfg.flow.solver);
    log_eps.push_back(std::log(eps));
    log_gap.push_back(std::log(cost_J(v, rho0) - star.J));
    log_h2.push_back(std::log(h2_norm(difference(v, star.value))));
  }
  res.quadratic_slope = fit_line(log_eps, log_gap).slope;
  res.alpha_slope = fit_line(log_eps, log_h2).slope;
  rep.add("optimum_grad_norm", star.grad_norm, "<", 1e-6);
  rep.add("quadratic_growth_slope", res.quadratic_slope, ">=", cfg.min_slope_quadratic);
  rep.add("value_growth_slope", res.alpha_slope, ">=", cfg.min_slope_alpha);

  // Common-noise coupling around the manufactured optimum.
  const ControlField u_star = manufactured_optimal_control(base, sol);
  double worst_shrink = 0.0;
  double min_ratio = std::numeric_limits<double>::infinity(), max_ratio = 0.0;
  for (std::size_t k = 0; k < cfg.coupling_sizes.size(); ++k) {
    const ControlField u2 = u_star + ControlField::constant(base, scalar(cfg.coupling_sizes[k]));
    res.coupling.push_back(
        coupling_experiment(spec, u_star, u2, cfg.coupling_paths, cfg.coupling_steps, cfg.seed));
    const CouplingRecord& rec = res.coupling.back();
    min_ratio = std::min(min_ratio, rec.ratio);
    max_ratio = std::max(max_ratio, rec.ratio);
    if (k > 0) worst_shrink = std::max(worst_shrink, rec.sup_mean_sq_distance / res.coupling[k - 1].sup_mean_sq_distance);
  }
  rep.add("coupling_worst_successive_ratio", worst_shrink, "<", 1.0);
  rep.add("coupling_ratio_spread", max_ratio / min_ratio, "<", 10.0);
  return res;
}

}  // namespace pgflow
