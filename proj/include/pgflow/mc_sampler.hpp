#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pgflow/core_problem.hpp"
#include "pgflow/fields.hpp"

namespace pgflow {

/// Euler-Maruyama paths on the torus with their Brownian increments.
struct TrajectoryBatch {
  int n_paths = 0;
  int n_steps = 0;
  int dim = 1;
  int dim_noise = 1;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> states;                  // [path][step 0..N][axis], wrapped
  std::vector<double> unwrapped_displacement;  // [path][axis], x_N - x_0 without wrapping
  std::vector<double> noise;                   // [path][step 0..N-1][k], sqrt(dt) * xi

  double dt() const { return horizon / n_steps; }
  double time(int step) const { return step == n_steps ? horizon : step * dt(); }
  Vec state(int path, int step) const;
};

/// Same seed and inputs give a bit-identical batch regardless of the thread
/// count. Path j, step i draws its normals from Philox block
/// (j, i, 0, 0) and its initial point from (j, 0, 0, 1), keyed by the seed.
TrajectoryBatch simulate(const ProblemSpec& spec, const ControlField& u, int n_paths, int n_steps,
                         std::uint64_t seed);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Mean over paths of sum_{i<N} r(t_i, x_i, u) dt + h(x_N), with the
/// standard error of the mean.
McEstimate estimate_J_mc(const ProblemSpec& spec, const ControlField& u, const TrajectoryBatch& batch);

struct SamplePoint {
  double t = 0.0;
  Vec x;
};

/// Sample set of a batch: every (t_i, x_i) with i < N.
std::vector<SamplePoint> batch_samples(const TrajectoryBatch& batch);

struct RegressionReport {
  std::size_t samples = 0;
  std::size_t unvisited = 0;  // parameters with no sample in their support
  double lambda = 0.0;
  std::vector<bool> visited;  // per space-time node
};

/// Least-squares fit of the hat-basis increment to dtau * grad_u G at the
/// sample points, with the co-state interpolated from V's derivative fields.
/// Solves the normal equations regularized by lambda = 1e-8 trace(A)/dim and
/// returns u + increment. Throws RegressionFailure when the system cannot
/// be solved.
ControlField regression_from_samples(const ProblemSpec& spec, const ControlField& u,
                                     const ScalarField& value, std::span<const SamplePoint> samples,
                                     double dtau, RegressionReport* report = nullptr);

ControlField regression_update(const ProblemSpec& spec, const ControlField& u, const ScalarField& value,
                               const TrajectoryBatch& batch, double dtau,
                               RegressionReport* report = nullptr);

/// dtau * grad_u G at every node, co-state from central differences of V.
ControlField exact_step_increment(const ProblemSpec& spec, const ControlField& u,
                                  const ScalarField& value, double dtau);

struct CouplingRecord {
  double sup_mean_sq_distance = 0.0;   // sup_t E|x1_t - x2_t|^2, minimal image
  double l2_control_distance_sq = 0.0;  // ||u1 - u2||^2
  double ratio = 0.0;                   // 0 when both vanish
};

/// Simulates both controls with the same seed, hence the same initial points
/// and noise.
CouplingRecord coupling_experiment(const ProblemSpec& spec, const ControlField& u1,
                                   const ControlField& u2, int n_paths, int n_steps,
                                   std::uint64_t seed);

struct RegressionConsistencyRow {
  int n_paths = 0;
  double gap = 0.0;           // ||increment - dtau grad_u G|| on visited nodes
  double weighted_gap = 0.0;  // ||increment - dtau rho grad_u G|| on visited nodes
  std::size_t unvisited = 0;
};

/// Runs regression_update for each path count (seeds seed, seed + 1, ...)
/// and compares the increment with the exact-pathway step.
std::vector<RegressionConsistencyRow> regression_consistency(
    const ProblemSpec& spec, const ControlField& u, const ScalarField& value, const ScalarField& rho,
    double dtau, const std::vector<int>& path_counts, int n_steps, std::uint64_t seed);

/// Binary batch container: "CTRLTRJ1", u32 (n_paths, N, n, m), f64 horizon,
/// u64 seed, then states, unwrapped displacements and noise as f64.
void write_batch(std::ostream& os, const TrajectoryBatch& batch);
TrajectoryBatch read_batch(std::istream& is);
void save_batch(const std::string& path, const TrajectoryBatch& batch);
TrajectoryBatch load_batch(const std::string& path);

}  // namespace pgflow
