#include "pgflow/mc_sampler.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "pgflow/errors.hpp"
#include "pgflow/field_io.hpp"
#include "pgflow/parallel.hpp"
#include "pgflow/philox.hpp"

namespace pgflow {

Vec TrajectoryBatch::state(int path, int step) const {
  Vec x(dim);
  const std::size_t base = (static_cast<std::size_t>(path) * (n_steps + 1) + step) * dim;
  for (int a = 0; a < dim; ++a) x[a] = states[base + a];
  return x;
}

namespace {

constexpr std::uint32_t kNoiseTag = 0;
constexpr std::uint32_t kInitialTag = 1;

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace

TrajectoryBatch simulate(const ProblemSpec& spec, const ControlField& u, int n_paths, int n_steps,
                         std::uint64_t seed) {
  if (n_steps < 1) throw std::invalid_argument("simulate needs at least one step");
  if (n_paths < 1) throw std::invalid_argument("simulate needs at least one path");
  const TorusGeometry& geo = spec.geometry;
  if (u.components() != geo.dim_control || u.grid().dim() != geo.dim_state) {
    throw std::invalid_argument("control field does not match the problem dimensions");
  }

  TrajectoryBatch b;
  b.n_paths = n_paths;
  b.n_steps = n_steps;
  b.dim = geo.dim_state;
  b.dim_noise = geo.dim_noise;
  b.horizon = u.grid().horizon();
  b.seed = seed;
  b.states.assign(static_cast<std::size_t>(n_paths) * (n_steps + 1) * b.dim, 0.0);
  b.unwrapped_displacement.assign(static_cast<std::size_t>(n_paths) * b.dim, 0.0);
  b.noise.assign(static_cast<std::size_t>(n_paths) * n_steps * b.dim_noise, 0.0);

  const auto key = Philox4x32::key_from_seed(seed);
  const double dt = b.dt();
  const double sqrt_dt = std::sqrt(dt);
  const int n = b.dim;
  const int m = b.dim_noise;

  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto path = static_cast<std::uint32_t>(j);
      const auto init = Philox4x32::block({path, 0, 0, kInitialTag}, key);
      Vec x(n);
      for (int a = 0; a < n; ++a) x[a] = half_open_uniform(init[a]);
      Vec displacement = Vec::Zero(n);
      double* states = &b.states[j * (n_steps + 1) * n];
      double* noise = &b.noise[j * n_steps * m];
      for (int a = 0; a < n; ++a) states[a] = x[a];

      for (int i = 0; i < n_steps; ++i) {
        const double t = b.time(i);
        const Vec ui = interpolate(u, t, x);
        const Vec drift = spec.drift(t, x, ui);
        const Mat sigma = spec.diffusion(t, x, ui);
        if (!all_finite(drift) || !sigma.allFinite()) {
          throw NumericError("non-finite drift or diffusion on path " + std::to_string(j) + " at step " +
                             std::to_string(i));
        }
        const auto z = box_muller(Philox4x32::block({path, static_cast<std::uint32_t>(i), 0, kNoiseTag}, key));
        Vec dw(m);
        for (int k = 0; k < m; ++k) {
          dw[k] = sqrt_dt * z[k];
          noise[i * m + k] = dw[k];
        }
        const Vec step = drift * dt + sigma * dw;
        displacement += step;
        x = wrap(Vec(x + step));
        for (int a = 0; a < n; ++a) states[(i + 1) * n + a] = x[a];
      }
      for (int a = 0; a < n; ++a) b.unwrapped_displacement[j * n + a] = displacement[a];
    }
  });
  return b;
}

McEstimate estimate_J_mc(const ProblemSpec& spec, const ControlField& u, const TrajectoryBatch& batch) {
  std::vector<double> cost(batch.n_paths, 0.0);
  const double dt = batch.dt();
  parallel_for(cost.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      double c = 0.0;
      for (int i = 0; i < batch.n_steps; ++i) {
        const double t = batch.time(i);
        const Vec x = batch.state(static_cast<int>(j), i);
        c += spec.running_cost(t, x, interpolate(u, t, x)) * dt;
      }
      cost[j] = c + spec.terminal_cost(batch.state(static_cast<int>(j), batch.n_steps));
    }
  });

  double mean = 0.0;
  for (double c : cost) mean += c;
  mean /= static_cast<double>(cost.size());
  McEstimate est{mean, 0.0};
  if (cost.size() > 1) {
    double ss = 0.0;
    for (double c : cost) ss += (c - mean) * (c - mean);
    const double var = ss / static_cast<double>(cost.size() - 1);
    est.std_error = std::sqrt(var / static_cast<double>(cost.size()));
  }
  return est;
}

std::vector<SamplePoint> batch_samples(const TrajectoryBatch& batch) {
  std::vector<SamplePoint> out;
  out.reserve(static_cast<std::size_t>(batch.n_paths) * batch.n_steps);
  for (int j = 0; j < batch.n_paths; ++j) {
    for (int i = 0; i < batch.n_steps; ++i) out.push_back({batch.time(i), batch.state(j, i)});
  }
  return out;
}

namespace {

// Normal matrix of the hat-basis design. Two basis functions share a sample
// only if they are at most one level and one cell apart along every axis, so
// each row stores a fixed band of 3^(n+1) slots.
class NormalStencil {
 public:
  explicit NormalStencil(const SpaceTimeGrid& g) : grid_(g) {
    slots_ = 3;
    for (int a = 0; a < g.dim(); ++a) slots_ *= 3;
    values_.assign(rows() * slots_, 0.0);
  }

  std::size_t rows() const { return grid_.nodes() * static_cast<std::size_t>(grid_.n_t()); }

  void add(std::size_t row, std::size_t col, double v) { values_[row * slots_ + slot(row, col)] += v; }

  double diagonal(std::size_t row) const { return values_[row * slots_ + slot(row, row)]; }

  Eigen::SparseMatrix<double> assemble(double lambda) const {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(rows() * 3);
    for (std::size_t row = 0; row < rows(); ++row) {
      for (int s = 0; s < slots_; ++s) {
        const double v = values_[row * slots_ + s];
        if (v != 0.0) triplets.emplace_back(static_cast<int>(row), static_cast<int>(column(row, s)), v);
      }
      triplets.emplace_back(static_cast<int>(row), static_cast<int>(row), lambda);
    }
    Eigen::SparseMatrix<double> a(static_cast<int>(rows()), static_cast<int>(rows()));
    a.setFromTriplets(triplets.begin(), triplets.end());
    return a;
  }

 private:
  int offset_digit(int from, int to) const {
    const int nx = grid_.n_x();
    const int d = ((to - from) % nx + nx) % nx;
    if (d == 0) return 1;
    if (d == 1) return 2;
    if (d == nx - 1) return 0;
    throw std::logic_error("basis functions do not overlap");
  }

  int slot(std::size_t row, std::size_t col) const {
    const std::size_t nodes = grid_.nodes();
    const long dl = static_cast<long>(col / nodes) - static_cast<long>(row / nodes);
    if (dl < -1 || dl > 1) throw std::logic_error("basis functions do not overlap in time");
    int s = static_cast<int>(dl + 1);
    for (int a = 0; a < grid_.dim(); ++a) {
      s = s * 3 + offset_digit(grid_.axis_index(row % nodes, a), grid_.axis_index(col % nodes, a));
    }
    return s;
  }

  std::size_t column(std::size_t row, int s) const {
    const std::size_t nodes = grid_.nodes();
    std::size_t node = row % nodes;
    int rest = s;
    for (int a = grid_.dim() - 1; a >= 0; --a) {
      const int digit = rest % 3;
      rest /= 3;
      if (digit != 1) node = grid_.neighbor(node, a, digit - 1);
    }
    const long level = static_cast<long>(row / nodes) + rest - 1;
    return static_cast<std::size_t>(level) * nodes + node;
  }

  const SpaceTimeGrid& grid_;
  int slots_;
  std::vector<double> values_;
};

struct DerivativeFields {
  std::vector<std::vector<double>> gradient;  // per level, [node][axis]
  std::vector<std::vector<double>> hessian;   // per level, [node][row][col]
};

DerivativeFields derivative_fields(const ScalarField& value) {
  DerivativeFields d;
  for (int l = 0; l < value.grid().n_t(); ++l) {
    d.gradient.push_back(gradient_x(value, l));
    d.hessian.push_back(hessian_x(value, l));
  }
  return d;
}

CoState interpolated_costate(const SpaceTimeGrid& g, const DerivativeFields& d, const HatStencil& st,
                             const Vec& x) {
  const int n = g.dim();
  std::vector<double> grad(n, 0.0);
  std::vector<double> hess(n * n, 0.0);
  std::vector<double> gbuf(n);
  std::vector<double> hbuf(n * n);
  const int upper = std::min(st.level + 1, g.n_t() - 1);
  const double weights[2] = {1.0 - st.upper_weight, st.upper_weight};
  const int levels[2] = {st.level, upper};
  for (int side = 0; side < 2; ++side) {
    if (weights[side] == 0.0) continue;
    interpolate_slice(g, d.gradient[levels[side]], n, x, gbuf);
    interpolate_slice(g, d.hessian[levels[side]], n * n, x, hbuf);
    for (int k = 0; k < n; ++k) grad[k] += weights[side] * gbuf[k];
    for (int k = 0; k < n * n; ++k) hess[k] += weights[side] * hbuf[k];
  }
  Vec gv(n);
  Mat hm(n, n);
  for (int k = 0; k < n; ++k) gv[k] = grad[k];
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) hm(r, c) = hess[r * n + c];
  }
  return CoState::from_value_derivatives(gv, hm);
}

}  // namespace

ControlField regression_from_samples(const ProblemSpec& spec, const ControlField& u,
                                     const ScalarField& value, std::span<const SamplePoint> samples,
                                     double dtau, RegressionReport* report) {
  const SpaceTimeGrid& g = u.grid();
  if (!g.same_shape(value.grid())) throw std::invalid_argument("value and control grids differ");
  const int width = u.components();
  const DerivativeFields deriv = derivative_fields(value);

  struct Row {
    std::array<std::size_t, 2 * HatStencil::kMaxCorners> index{};
    std::array<double, 2 * HatStencil::kMaxCorners> weight{};
    int size = 0;
    Vec target;
  };

  // Rows are built in parallel and reduced in sample order.
  std::vector<Row> rows(samples.size());
  parallel_for(samples.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const SamplePoint& p = samples[s];
      const HatStencil st = hat_stencil(g, p.t, p.x);
      Row& row = rows[s];
      const int upper = std::min(st.level + 1, g.n_t() - 1);
      for (int c = 0; c < st.corners; ++c) {
        const double lower_w = (1.0 - st.upper_weight) * st.weights[c];
        const double upper_w = st.upper_weight * st.weights[c];
        if (lower_w != 0.0) {
          row.index[row.size] = static_cast<std::size_t>(st.level) * g.nodes() + st.nodes[c];
          row.weight[row.size++] = lower_w;
        }
        if (upper_w != 0.0 && upper != st.level) {
          row.index[row.size] = static_cast<std::size_t>(upper) * g.nodes() + st.nodes[c];
          row.weight[row.size++] = upper_w;
        }
      }
      const CoState cs = interpolated_costate(g, deriv, st, p.x);
      row.target = dtau * grad_u_G(spec, p.t, p.x, interpolate(u, p.t, p.x), cs);
    }
  });

  NormalStencil normal(g);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(normal.rows()), width);
  for (const Row& row : rows) {
    for (int a = 0; a < row.size; ++a) {
      for (int b = 0; b < row.size; ++b) normal.add(row.index[a], row.index[b], row.weight[a] * row.weight[b]);
      for (int k = 0; k < width; ++k) rhs(static_cast<Eigen::Index>(row.index[a]), k) += row.weight[a] * row.target[k];
    }
  }

  double trace = 0.0;
  std::size_t unvisited = 0;
  std::vector<bool> visited(normal.rows());
  for (std::size_t r = 0; r < normal.rows(); ++r) {
    const double d = normal.diagonal(r);
    trace += d;
    visited[r] = d > 0.0;
    if (!visited[r]) ++unvisited;
  }
  if (!(trace > 0.0)) throw RegressionFailure("regression has no samples", unvisited);
  const double lambda = 1e-8 * trace / static_cast<double>(normal.rows());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(normal.assemble(lambda));
  if (ldlt.info() != Eigen::Success) {
    throw RegressionFailure("normal equations are singular beyond regularization", unvisited);
  }
  const Eigen::MatrixXd delta = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
    throw RegressionFailure("regression solve failed", unvisited);
  }

  ControlField out = u;
  for (std::size_t r = 0; r < normal.rows(); ++r) {
    const int level = static_cast<int>(r / g.nodes());
    const std::size_t node = r % g.nodes();
    for (int k = 0; k < width; ++k) out.component(level, node, k) += delta(static_cast<Eigen::Index>(r), k);
  }
  if (report != nullptr) {
    report->samples = samples.size();
    report->unvisited = unvisited;
    report->lambda = lambda;
    report->visited = std::move(visited);
  }
  return out;
}

ControlField regression_update(const ProblemSpec& spec, const ControlField& u, const ScalarField& value,
                               const TrajectoryBatch& batch, double dtau, RegressionReport* report) {
  const std::vector<SamplePoint> samples = batch_samples(batch);
  return regression_from_samples(spec, u, value, samples, dtau, report);
}

ControlField exact_step_increment(const ProblemSpec& spec, const ControlField& u,
                                  const ScalarField& value, double dtau) {
  const SpaceTimeGrid& g = u.grid();
  ControlField out(g);
  for (int l = 0; l < g.n_t(); ++l) {
    const auto slice = value.slice(l);
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      const CoState cs = CoState::from_value_derivatives(gradient_at(g, slice, i), hessian_at(g, slice, i));
      out.set(l, i, dtau * grad_u_G(spec, g.time(l), g.node_position(i), u.at(l, i), cs));
    }
  }
  return out;
}

CouplingRecord coupling_experiment(const ProblemSpec& spec, const ControlField& u1,
                                   const ControlField& u2, int n_paths, int n_steps,
                                   std::uint64_t seed) {
  if (!u1.grid().same_shape(u2.grid())) throw std::invalid_argument("coupled controls must share a grid");
  const TrajectoryBatch a = simulate(spec, u1, n_paths, n_steps, seed);
  const TrajectoryBatch b = simulate(spec, u2, n_paths, n_steps, seed);
  CouplingRecord rec;
  for (int i = 0; i <= n_steps; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n_paths; ++j) sum += torus_displacement(a.state(j, i), b.state(j, i)).squaredNorm();
    rec.sup_mean_sq_distance = std::max(rec.sup_mean_sq_distance, sum / n_paths);
  }
  const double l2 = l2_norm(u1 - u2);
  rec.l2_control_distance_sq = l2 * l2;
  if (rec.l2_control_distance_sq > 0.0) {
    rec.ratio = rec.sup_mean_sq_distance / rec.l2_control_distance_sq;
  } else {
    rec.ratio = rec.sup_mean_sq_distance == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return rec;
}

namespace {

double visited_l2(const ControlField& f, const std::vector<bool>& visited) {
  const SpaceTimeGrid& g = f.grid();
  double s = 0.0;
  for (int l = 0; l < g.n_t(); ++l) {
    double level_sum = 0.0;
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      if (!visited[l * g.nodes() + i]) continue;
      level_sum += f.at(l, i).squaredNorm();
    }
    s += g.trapezoid_weight(l) * level_sum;
  }
  return std::sqrt(s * g.cell_volume());
}

}  // namespace

std::vector<RegressionConsistencyRow> regression_consistency(
    const ProblemSpec& spec, const ControlField& u, const ScalarField& value, const ScalarField& rho,
    double dtau, const std::vector<int>& path_counts, int n_steps, std::uint64_t seed) {
  const SpaceTimeGrid& g = u.grid();
  const ControlField exact = exact_step_increment(spec, u, value, dtau);
  ControlField weighted = exact;
  for (int l = 0; l < g.n_t(); ++l) {
    for (std::size_t i = 0; i < g.nodes(); ++i) weighted.set(l, i, rho.at(l, i) * exact.at(l, i));
  }

  std::vector<RegressionConsistencyRow> rows;
  for (std::size_t k = 0; k < path_counts.size(); ++k) {
    const TrajectoryBatch batch = simulate(spec, u, path_counts[k], n_steps, seed + k);
    RegressionReport report;
    const ControlField increment = regression_update(spec, u, value, batch, dtau, &report) - u;
    rows.push_back({path_counts[k], visited_l2(increment - exact, report.visited),
                    visited_l2(increment - weighted, report.visited), report.unvisited});
  }
  return rows;
}

namespace {

constexpr char kBatchMagic[8] = {'C', 'T', 'R', 'L', 'T', 'R', 'J', '1'};

}  // namespace

void write_batch(std::ostream& os, const TrajectoryBatch& b) {
  os.write(kBatchMagic, sizeof(kBatchMagic));
  binio::put_u32(os, static_cast<std::uint32_t>(b.n_paths));
  binio::put_u32(os, static_cast<std::uint32_t>(b.n_steps));
  binio::put_u32(os, static_cast<std::uint32_t>(b.dim));
  binio::put_u32(os, static_cast<std::uint32_t>(b.dim_noise));
  binio::put_f64(os, b.horizon);
  binio::put_u64(os, b.seed);
  for (double v : b.states) binio::put_f64(os, v);
  for (double v : b.unwrapped_displacement) binio::put_f64(os, v);
  for (double v : b.noise) binio::put_f64(os, v);
  if (!os) throw std::runtime_error("failed to write trajectory batch");
}

TrajectoryBatch read_batch(std::istream& is) {
  char magic[sizeof(kBatchMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kBatchMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a CTRLTRJ1 batch");
  }
  TrajectoryBatch b;
  b.n_paths = static_cast<int>(binio::get_u32(is));
  b.n_steps = static_cast<int>(binio::get_u32(is));
  b.dim = static_cast<int>(binio::get_u32(is));
  b.dim_noise = static_cast<int>(binio::get_u32(is));
  b.horizon = binio::get_f64(is);
  b.seed = binio::get_u64(is);
  auto fill = [&](std::vector<double>& v, std::size_t count) {
    v.resize(count);
    for (double& x : v) x = binio::get_f64(is);
  };
  const auto paths = static_cast<std::size_t>(b.n_paths);
  fill(b.states, paths * (b.n_steps + 1) * b.dim);
  fill(b.unwrapped_displacement, paths * b.dim);
  fill(b.noise, paths * b.n_steps * b.dim_noise);
  return b;
}

void save_batch(const std::string& path, const TrajectoryBatch& batch) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_batch(os, batch);
}

TrajectoryBatch load_batch(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_batch(is);
}

}  // namespace pgflow
