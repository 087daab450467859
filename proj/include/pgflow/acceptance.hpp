#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgflow/config.hpp"
#include "pgflow/experiments.hpp"

namespace pgflow {

/// Every tolerance the acceptance suite checks. Overridable from a config
/// file through `verify.<field>` keys.
struct AcceptanceThresholds {
  // 1. gradient oracle
  double gradient_rel_tol = 1e-2;
  double gradient_fd_eps = 1e-4;
  int gradient_directions = 5;
  double gradient_budget_s = 60.0;
  // 2. descent and monotonicity
  int descent_steps = 200;
  double descent_J_tol = 1e-12;
  double descent_value_tol = 1e-6;
  double descent_budget_s = 300.0;
  // 3. two-basin
  double basin_grad_tol = 1e-3;
  double basin_gap_margin = 1e-4;
  double basin_probe_tol = 1e-8;
  double basin_budget_s = 300.0;
  // 4. rate
  double rate_min_r2 = 0.95;
  double rate_max_dist_star = 1e-2;
  double rate_max_dist_local = 1e-3;
  double rate_budget_s = 600.0;
  // 5. conservation and positivity
  double mass_drift_tol = 1e-8;
  double min_density = 0.0;
  // 6. Monte Carlo against the PDE
  int mc_paths = 10000;
  int mc_steps = 50;
  double mc_se_factor = 3.0;
  double mc_discretization_factor = 5.0;
  double identity_design_tol = 1e-8;
  // 7. regularity probes
  double probe_min_slope_quadratic = 1.9;
  double probe_min_slope_alpha = 1.15;
  double probe_max_refinement_growth = 2.0;
  double probe_budget_s = 600.0;
  // 8. discretization order
  double order_min_ratio = 3.0;

  std::uint64_t seed = 20240611;

  /// Reads `verify.<field>` keys; `seed` is shared with the run config.
  static AcceptanceThresholds from_config(const KeyValueConfig& cfg);
};

struct CriterionInfo {
  int id;
  std::string name;
  std::string description;
};

const std::vector<CriterionInfo>& acceptance_criteria();

struct CriterionOutcome {
  int id = 0;
  std::string name;
  bool pass = false;
  double seconds = 0.0;
  ExperimentReport report;
  std::string error;  // set when the criterion threw
};

/// Runs one criterion. Exceptions become a failed outcome with the message.
CriterionOutcome run_criterion(int id, const AcceptanceThresholds& th, const ArtifactOptions& art = {});

/// Runs the selected criteria (all when empty). Conservation is evaluated
/// last so that its audit covers every density solve of the run; outcomes
/// are returned in id order.
std::vector<CriterionOutcome> run_acceptance(const AcceptanceThresholds& th, std::vector<int> ids = {},
                                             const ArtifactOptions& art = {});

/// "[PASS] 1 gradient_oracle (12.3 s)" style line.
std::string verdict_line(const CriterionOutcome& o);

}  // namespace pgflow
