#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "pgflow/gradient_flow.hpp"
#include "pgflow/mc_sampler.hpp"
#include "pgflow/problems.hpp"

namespace pgflow {

/// One checked number: value OP threshold.
struct Metric {
  std::string name;
  double value = 0.0;
  std::string op;  // "<", "<=", ">", ">="
  double threshold = 0.0;
  bool pass = false;
};

struct ExperimentReport {
  std::string name;
  std::string config_digest;
  std::vector<Metric> metrics;
  std::vector<std::string> artifacts;

  /// Appends a metric and evaluates its verdict. NaN never passes.
  const Metric& add(const std::string& metric, double value, const std::string& op, double threshold);
  bool passed() const;

  static std::string csv_header();
  void write_csv(std::ostream& os) const;  // header plus one row per metric
  std::string summary() const;             // plain-text verdict table
};

/// Where experiments write traces; nothing is written when dir is empty.
struct ArtifactOptions {
  std::string dir;
  std::string config_digest;
};

/// Smooth random control: a constant plus three Fourier modes per axis with
/// 1/k^2 decay and a linear time factor. Deterministic in the generator.
ControlField random_smooth_control(const SpaceTimeGrid& grid, std::mt19937_64& rng, double amplitude);

struct TwoBasinConfig {
  int n_t = 64;
  int n_x = 64;
  double horizon = 0.2;
  double terminal_amplitude = 0.1;
  FlowConfig flow = default_flow();
  double grad_tol = 1e-3;
  double gap_margin = 1e-4;
  int probes = 100;
  double probe_tol = 1e-8;
  std::uint64_t seed = 1;

  static FlowConfig default_flow();
};

struct TwoBasinResult {
  ExperimentReport report;
  FlowResult run_a;  // from u0 = +1, settles on the u-tilde branch
  FlowResult run_b;  // from the global branch
  FlowResult run_c;  // from u0 = -1, the mirror image of run A
};

/// Run A starts from u0 = +1; run B from the global-branch control of the
/// terminal cost's slope; run C from u0 = -1 checks the mirror symmetry.
/// Also compares argmax_G with quartic_closed_forms on random probes.
TwoBasinResult run_two_basin_experiment(const TwoBasinConfig& cfg, const ArtifactOptions& art = {});

struct RateConfig {
  int n_t = 64;
  int n_x = 64;
  double horizon = 0.5;
  double amplitude = 0.2;
  double initial_control = 0.0;
  FlowConfig flow = default_flow();
  double fit_fraction = 0.6;  // middle share of the usable trace
  double gap_floor = 1e-13;   // J - J* below this is round-off
  double min_r2 = 0.95;
  double max_dist_star = 1e-2;
  double max_dist_local = 1e-3;
  double monotone_tol = 1e-12;

  static FlowConfig default_flow();
};

struct RateResult {
  ExperimentReport report;
  FlowResult flow;
  double J_star = 0.0;
  double c_hat = 0.0;
  double r2 = 0.0;
};

/// Flows the manufactured problem to tight convergence, takes J* as the
/// converged discrete optimum and fits log(J - J*) against tau.
RateResult run_rate_experiment(const RateConfig& cfg, const ArtifactOptions& art = {});

struct RegularityConfig {
  int n_t = 33;  // base grid; the refined grid doubles n_x and halves dt
  int n_x = 32;
  double horizon = 0.5;
  double amplitude = 0.2;
  int pairs = 20;
  int scales = 10;
  double eps0 = 0.25;
  double eps_ratio = 0.6;
  double min_slope_quadratic = 1.9;
  double min_slope_alpha = 1.15;
  double max_refinement_growth = 2.0;
  FlowConfig flow = RateConfig::default_flow();
  // Coupling probe.
  std::vector<double> coupling_sizes{0.2, 0.1, 0.05, 0.025, 0.0125};
  int coupling_paths = 10000;
  int coupling_steps = 50;
  std::uint64_t seed = 3;
};

struct RegularityResult {
  ExperimentReport report;
  double c2_ratio = 0.0;
  double c2_ratio_refined = 0.0;
  double lipschitz_ratio = 0.0;
  double lipschitz_ratio_refined = 0.0;
  double quadratic_slope = 0.0;
  double alpha_slope = 0.0;
  std::vector<CouplingRecord> coupling;
};

/// H^2 stability ratio, quadratic growth of J, superlinear growth of V, the
/// Lipschitz ratio of the pointwise maximizer and the common-noise coupling,
/// all on the manufactured problem.
RegularityResult run_regularity_probes(const RegularityConfig& cfg);

/// Least-squares slope and R^2 of y against x.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// The manufactured optimal control sampled on a grid.
ControlField manufactured_optimal_control(const SpaceTimeGrid& grid, const ManufacturedSolution& sol);

/// The manufactured value function sampled on a grid.
ScalarField manufactured_value(const SpaceTimeGrid& grid, const ManufacturedSolution& sol);

}  // namespace pgflow
