#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pgflow/acceptance.hpp"
#include "pgflow/config.hpp"
#include "pgflow/gradient_flow.hpp"
#include "pgflow/problems.hpp"

namespace pgflow {

/// Process exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumeric = 1;
inline constexpr int kExitConfig = 2;

/// Validated run configuration. See README.md for the key reference.
struct RunConfig {
  std::string problem;
  ProblemOptions options;
  ConstantCoefficients constant;
  double horizon = 0.0;
  int n_t = 64;
  int n_x = 64;
  /// A number (constant control), "global_branch" (quartic_trap) or
  /// "optimal" (manufactured_concave).
  std::string initial_control = "1";
  FlowConfig flow;
  int n_paths = 10000;
  int n_steps = 50;
  std::uint64_t seed = 1;
  std::string out_dir = "pgflow_out";
  std::vector<int> criteria;  // verify selection; empty means all
  AcceptanceThresholds thresholds;
  std::string digest;
};

/// Reads and validates every key; unknown keys, missing required keys and
/// out-of-range values raise ConfigError. `seed_override` replaces the seed
/// before the digest is taken.
RunConfig parse_run_config(const KeyValueConfig& kv, bool require_problem,
                           const std::string* seed_override = nullptr);

ProblemSpec make_problem(const RunConfig& cfg);
SpaceTimeGrid make_grid(const RunConfig& cfg, const ProblemSpec& spec);
ControlField make_initial_control(const RunConfig& cfg, const SpaceTimeGrid& grid);

/// Entry point of the pgflow executable; returns the exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pgflow
