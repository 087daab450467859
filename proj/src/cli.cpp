#include "pgflow/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "pgflow/errors.hpp"
#include "pgflow/field_io.hpp"
#include "pgflow/mc_sampler.hpp"
#include "pgflow/parallel.hpp"

namespace pgflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<int> parse_criteria(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    try {
      std::size_t used = 0;
      const int id = std::stoi(item.substr(first), &used);
      if (item.find_first_not_of(' ', first + used) != std::string::npos) throw std::invalid_argument(item);
      ids.push_back(id);
    } catch (const std::exception&) {
      throw ConfigError("key 'verify.criteria': expected a comma-separated list of ids, got '" + text + "'");
    }
  }
  const auto& known = acceptance_criteria();
  for (int id : ids) {
    if (id < 1 || id > static_cast<int>(known.size())) {
      throw ConfigError("key 'verify.criteria': no criterion " + std::to_string(id));
    }
  }
  return ids;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

std::string digest_line(const RunConfig& cfg) { return "# config_digest=" + cfg.digest; }

std::ofstream open_output(const std::string& dir, const std::string& name) {
  const std::string path = dir + "/" + name;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  return os;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

RunConfig parse_run_config(const KeyValueConfig& source, bool require_problem, const std::string* seed_override) {
  KeyValueConfig kv = source;
  if (seed_override != nullptr) kv.set("seed", *seed_override);

  RunConfig cfg;
  cfg.problem = require_problem ? kv.require_string("problem") : kv.get_string("problem", "quartic_trap");
  const auto names = builtin_problem_names();
  const bool builtin = std::find(names.begin(), names.end(), cfg.problem) != names.end();
  require(builtin || cfg.problem == "constant", "key 'problem': unknown problem '" + cfg.problem + "'");

  cfg.horizon = kv.get_double("horizon", builtin ? default_horizon(cfg.problem) : 1.0);
  cfg.n_t = kv.get_int("n_t", cfg.n_t);
  cfg.n_x = kv.get_int("n_x", cfg.n_x);
  cfg.options.horizon = cfg.horizon;
  cfg.options.terminal_amplitude = kv.get_double("terminal_amplitude", cfg.options.terminal_amplitude);
  cfg.options.manufactured_amplitude = kv.get_double("manufactured_amplitude", cfg.options.manufactured_amplitude);
  cfg.constant.drift = kv.get_double("constant.drift", 0.0);
  cfg.constant.sigma = kv.get_double("constant.sigma", 0.0);
  cfg.constant.running_cost = kv.get_double("constant.running_cost", 0.0);
  cfg.constant.terminal_cost = kv.get_double("constant.terminal_cost", 0.0);
  cfg.initial_control = kv.get_string("initial_control", cfg.initial_control);

  SolverConfig& solver = cfg.flow.solver;
  solver.cfl_safety = kv.get_double("solver.cfl_safety", solver.cfl_safety);
  solver.max_substeps_per_level = kv.get_int("solver.max_substeps_per_level", solver.max_substeps_per_level);
  solver.mass_tolerance = kv.get_double("solver.mass_tolerance", solver.mass_tolerance);

  FlowConfig& flow = cfg.flow;
  flow.dtau = kv.get_double("flow.dtau", flow.dtau);
  flow.max_steps = kv.get_int("flow.max_steps", flow.max_steps);
  flow.stop_grad_norm = kv.get_double("flow.stop_grad_norm", flow.stop_grad_norm);
  flow.stall_window = kv.get_int("flow.stall_window", flow.stall_window);
  flow.stall_min_decrease = kv.get_double("flow.stall_min_decrease", flow.stall_min_decrease);
  flow.armijo.enabled = kv.get_bool("flow.armijo", flow.armijo.enabled);
  flow.armijo.shrink = kv.get_double("flow.armijo_shrink", flow.armijo.shrink);
  flow.armijo.slope = kv.get_double("flow.armijo_slope", flow.armijo.slope);
  flow.armijo.max_halvings = kv.get_int("flow.max_halvings", flow.armijo.max_halvings);
  flow.value_monotonicity_tol = kv.get_double("flow.value_monotonicity_tol", flow.value_monotonicity_tol);
  flow.hjb_every = kv.get_int("flow.hjb_every", flow.hjb_every);
  flow.argmax.incumbent_only = kv.get_bool("flow.incumbent_only", flow.argmax.incumbent_only);

  cfg.n_paths = kv.get_int("sampler.n_paths", cfg.n_paths);
  cfg.n_steps = kv.get_int("sampler.n_steps", cfg.n_steps);
  cfg.seed = kv.get_u64("seed", cfg.seed);
  cfg.out_dir = kv.get_string("out_dir", cfg.out_dir);
  cfg.criteria = parse_criteria(kv.get_string("verify.criteria", ""));
  cfg.thresholds = AcceptanceThresholds::from_config(kv);

  const auto unknown = kv.unused_keys();
  require(unknown.empty(), unknown.empty() ? "" : "unknown key '" + *unknown.begin() + "'");

  require(cfg.horizon > 0.0, "key 'horizon': must be positive");
  require(cfg.n_t >= 2, "key 'n_t': must be at least 2");
  require(cfg.n_x >= 4, "key 'n_x': must be at least 4");
  require(cfg.n_paths >= 1, "key 'sampler.n_paths': must be at least 1");
  require(cfg.n_steps >= 1, "key 'sampler.n_steps': must be at least 1");
  require(cfg.constant.sigma >= 0.0, "key 'constant.sigma': must be nonnegative");
  try {
    flow.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("flow/solver settings: ") + e.what());
  }
  const std::string& init = cfg.initial_control;
  if (init == "global_branch") {
    require(cfg.problem == "quartic_trap", "key 'initial_control': global_branch needs problem quartic_trap");
  } else if (init == "optimal") {
    require(cfg.problem == "manufactured_concave", "key 'initial_control': optimal needs problem manufactured_concave");
  } else {
    char* end = nullptr;
    std::strtod(init.c_str(), &end);
    require(!init.empty() && end == init.c_str() + init.size(),
            "key 'initial_control': expected a number, global_branch or optimal, got '" + init + "'");
  }

  cfg.digest = kv.digest({"out_dir"});
  return cfg;
}

ProblemSpec make_problem(const RunConfig& cfg) {
  if (cfg.problem == "constant") return constant_problem(cfg.constant);
  return build_problem(cfg.problem, cfg.options);
}

SpaceTimeGrid make_grid(const RunConfig& cfg, const ProblemSpec& spec) {
  return SpaceTimeGrid(spec.geometry, cfg.horizon, cfg.n_t, cfg.n_x);
}

ControlField make_initial_control(const RunConfig& cfg, const SpaceTimeGrid& grid) {
  Vec one(1);
  if (cfg.initial_control == "global_branch") {
    const double a = cfg.options.terminal_amplitude;
    return ControlField::sample(grid, [a](double, const Vec& x) {
      Vec u(1);
      u[0] = quartic_closed_forms(-a * kTwoPi * std::sin(kTwoPi * x[0])).u_star;
      return u;
    });
  }
  if (cfg.initial_control == "optimal") {
    const ManufacturedSolution sol(cfg.options.manufactured_amplitude, cfg.horizon);
    return ControlField::sample(grid, [&sol](double t, const Vec& x) {
      Vec u(1);
      u[0] = sol.optimal_control(t, x[0]);
      return u;
    });
  }
  one[0] = std::strtod(cfg.initial_control.c_str(), nullptr);
  return ControlField::constant(grid, one);
}

namespace {

int cmd_solve(const RunConfig& cfg, std::ostream& out) {
  const ProblemSpec spec = make_problem(cfg);
  const SpaceTimeGrid grid = make_grid(cfg, spec);
  const ControlField u = make_initial_control(cfg, grid);
  const std::vector<double> rho0 = uniform_density(grid);
  SolverReport value_report, density_report;
  const ScalarField value = solve_hj(spec, u, cfg.flow.solver, &value_report);
  const ScalarField rho = solve_fp(spec, u, rho0, cfg.flow.solver, &density_report);
  const double J = cost_J(value, rho0);
  const double J_density = cost_from_density(spec, u, rho);

  save_field(cfg.out_dir + "/value.ctrlfld", value);
  save_field(cfg.out_dir + "/density.ctrlfld", rho);
  {
    auto os = open_output(cfg.out_dir, "solver_report.csv");
    os << digest_line(cfg) << "\nsolve," << SolverReport::csv_header() << '\n';
    os << "value," << value_report.csv_row() << '\n';
    os << "density," << density_report.csv_row() << '\n';
  }
  {
    auto os = open_output(cfg.out_dir, "solve_summary.csv");
    os << digest_line(cfg) << "\nproblem,n_t,n_x,horizon,J,J_from_density\n";
    os << cfg.problem << ',' << cfg.n_t << ',' << cfg.n_x << ',' << num(cfg.horizon) << ',' << num(J) << ','
       << num(J_density) << '\n';
  }
  out << "J = " << num(J) << " (density pathway " << num(J_density) << ")\n";
  if (density_report.positivity_warning) out << "warning: density dipped below -1e-6\n";
  return kExitOk;
}

int cmd_flow(const RunConfig& cfg, std::ostream& out) {
  const ProblemSpec spec = make_problem(cfg);
  const SpaceTimeGrid grid = make_grid(cfg, spec);
  const FlowResult result = run_flow(spec, make_initial_control(cfg, grid), cfg.flow);
  {
    auto os = open_output(cfg.out_dir, "trace.csv");
    os << digest_line(cfg) << '\n' << trace_csv_header() << '\n';
    for (const TraceRecord& r : result.trace) os << trace_csv_row(r) << '\n';
  }
  save_field(cfg.out_dir + "/control.ctrlfld", result.final_state.u);
  save_field(cfg.out_dir + "/value.ctrlfld", result.final_state.value);
  const FlowState& s = result.final_state;
  {
    auto os = open_output(cfg.out_dir, "flow_summary.csv");
    os << digest_line(cfg) << "\nstop_reason,steps,tau,J,grad_norm,dist_to_local\n";
    os << stop_reason_name(result.reason) << ',' << result.trace.size() - 1 << ',' << num(s.tau) << ','
       << num(s.J) << ',' << num(s.grad_norm) << ',' << num(s.dist_to_local) << '\n';
  }
  out << "stop: " << stop_reason_name(result.reason) << " after " << result.trace.size() - 1 << " steps, J = "
      << num(s.J) << ", grad_norm = " << num(s.grad_norm) << '\n';
  if (result.reason == StopReason::kStepFailure) {
    out << "step failure: " << result.failure << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const ProblemSpec spec = make_problem(cfg);
  const SpaceTimeGrid grid = make_grid(cfg, spec);
  const ControlField u = make_initial_control(cfg, grid);
  const TrajectoryBatch batch = simulate(spec, u, cfg.n_paths, cfg.n_steps, cfg.seed);
  const McEstimate est = estimate_J_mc(spec, u, batch);
  save_batch(cfg.out_dir + "/batch.ctrltrj", batch);
  {
    auto os = open_output(cfg.out_dir, "estimate.csv");
    os << digest_line(cfg) << "\nproblem,n_paths,n_steps,seed,estimate,std_error\n";
    os << cfg.problem << ',' << cfg.n_paths << ',' << cfg.n_steps << ',' << cfg.seed << ',' << num(est.estimate)
       << ',' << num(est.std_error) << '\n';
  }
  out << "J_mc = " << num(est.estimate) << " +- " << num(est.std_error) << '\n';
  return kExitOk;
}

int cmd_verify(const RunConfig& cfg, bool list, std::ostream& out) {
  if (list) {
    for (const CriterionInfo& c : acceptance_criteria()) out << c.id << ' ' << c.name << ": " << c.description << '\n';
    return kExitOk;
  }
  const ArtifactOptions art{cfg.out_dir, cfg.digest};
  const auto outcomes = run_acceptance(cfg.thresholds, cfg.criteria, art);
  bool all = true;
  auto csv = open_output(cfg.out_dir, "verify.csv");
  auto txt = open_output(cfg.out_dir, "verify.txt");
  csv << digest_line(cfg) << '\n' << ExperimentReport::csv_header() << '\n';
  csv.precision(17);
  for (const CriterionOutcome& o : outcomes) {
    const std::string line = verdict_line(o);
    out << line << '\n';
    txt << line << '\n' << o.report.summary();
    for (const Metric& m : o.report.metrics) {
      csv << o.name << ',' << m.name << ',' << m.value << ',' << m.op << ',' << m.threshold << ','
          << (m.pass ? "pass" : "fail") << '\n';
    }
    all = all && o.pass;
  }
  out << (all ? "all criteria passed" : "some criteria FAILED") << '\n';
  return all ? kExitOk : kExitNumeric;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Policy gradient flow for stochastic optimal control on the flat torus", "pgflow"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, seed;
  int threads = 0;
  bool list = false;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "Run configuration file (key = value)");
    if (config_required) opt->required();
    sub->add_option("--out", out_dir, "Output directory (overrides out_dir and PGFLOW_OUT_DIR)");
    sub->add_option("--seed", seed, "Seed, overrides the config");
    sub->add_option("--threads", threads, "Worker cap; default is the number of cores")->check(CLI::NonNegativeNumber);
  };
  CLI::App* solve = app.add_subcommand("solve", "Evaluate V and rho for the initial control");
  CLI::App* flow = app.add_subcommand("flow", "Run the policy gradient flow");
  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo paths and cost estimate");
  CLI::App* verify = app.add_subcommand("verify", "Run the acceptance suite");
  add_common(solve, true);
  add_common(flow, true);
  add_common(sim, true);
  add_common(verify, false);
  verify->add_flag("--list", list, "List the criteria without running them");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "pgflow: " << e.what() << '\n';
    return kExitConfig;
  }

  RunConfig cfg;
  try {
    const KeyValueConfig kv = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
    cfg = parse_run_config(kv, !verify->parsed(), seed.empty() ? nullptr : &seed);
    if (const char* env = std::getenv("PGFLOW_OUT_DIR"); env != nullptr && *env != '\0') cfg.out_dir = env;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
  } catch (const std::exception& e) {
    err << "pgflow: configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
  set_thread_cap(threads);

  try {
    if (!(verify->parsed() && list)) std::filesystem::create_directories(cfg.out_dir);
    if (solve->parsed()) return cmd_solve(cfg, out);
    if (flow->parsed()) return cmd_flow(cfg, out);
    if (sim->parsed()) return cmd_simulate(cfg, out);
    return cmd_verify(cfg, list, out);
  } catch (const std::exception& e) {
    err << "pgflow: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace pgflow
