#include "pgflow/fields.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pgflow/errors.hpp"

namespace pgflow {

SpaceTimeGrid::SpaceTimeGrid(TorusGeometry geometry, double horizon, int n_t, int n_x)
    : geometry_(geometry), horizon_(horizon), n_t_(n_t), n_x_(n_x) {
  geometry_.validate();
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("horizon T must be positive");
  }
  if (n_t < 2) throw std::invalid_argument("n_t must be at least 2");
  if (n_x < 4) throw std::invalid_argument("n_x must be at least 4");
  nodes_ = 1;
  for (int a = 0; a < geometry_.dim_state; ++a) {
    stride_[a] = nodes_;
    nodes_ *= static_cast<std::size_t>(n_x);
  }
  cell_volume_ = std::pow(dx(), geometry_.dim_state);
}

double SpaceTimeGrid::time(int level) const {
  // Last level pinned to T exactly.
  return level == n_t_ - 1 ? horizon_ : level * dt();
}

double SpaceTimeGrid::trapezoid_weight(int level) const {
  return (level == 0 || level == n_t_ - 1) ? 0.5 * dt() : dt();
}

int SpaceTimeGrid::axis_index(std::size_t node, int axis) const {
  return static_cast<int>((node / stride_[axis]) % static_cast<std::size_t>(n_x_));
}

Vec SpaceTimeGrid::node_position(std::size_t node) const {
  Vec x(dim());
  for (int a = 0; a < dim(); ++a) x[a] = axis_index(node, a) * dx();
  return x;
}

std::size_t SpaceTimeGrid::neighbor(std::size_t node, int axis, int offset) const {
  const int i = axis_index(node, axis);
  const int j = ((i + offset) % n_x_ + n_x_) % n_x_;
  return node + (static_cast<std::ptrdiff_t>(j) - i) * static_cast<std::ptrdiff_t>(stride_[axis]);
}

bool SpaceTimeGrid::same_shape(const SpaceTimeGrid& other) const {
  return geometry_.dim_state == other.geometry_.dim_state &&
         geometry_.dim_control == other.geometry_.dim_control && n_t_ == other.n_t_ &&
         n_x_ == other.n_x_ && horizon_ == other.horizon_;
}

const char* role_name(FieldRole role) {
  switch (role) {
    case FieldRole::kValue: return "value";
    case FieldRole::kDensity: return "density";
    case FieldRole::kGeneric: return "generic";
    case FieldRole::kControl: return "control";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// ScalarField

ScalarField::ScalarField(SpaceTimeGrid grid, FieldRole role)
    : grid_(std::move(grid)), role_(role), values_(grid_.n_t() * grid_.nodes(), 0.0) {}

ScalarField::ScalarField(SpaceTimeGrid grid, FieldRole role, std::vector<double> values)
    : grid_(std::move(grid)), role_(role), values_(std::move(values)) {
  if (values_.size() != grid_.n_t() * grid_.nodes()) {
    throw std::invalid_argument("scalar field payload does not match grid");
  }
}

ScalarField ScalarField::sample(const SpaceTimeGrid& grid, FieldRole role,
                                const std::function<double(double, const Vec&)>& f) {
  ScalarField out(grid, role);
  for (int l = 0; l < grid.n_t(); ++l) {
    const double t = grid.time(l);
    for (std::size_t i = 0; i < grid.nodes(); ++i) out.at(l, i) = f(t, grid.node_position(i));
  }
  return out;
}

std::span<double> ScalarField::slice(int level) {
  return {values_.data() + level * grid_.nodes(), grid_.nodes()};
}

std::span<const double> ScalarField::slice(int level) const {
  return {values_.data() + level * grid_.nodes(), grid_.nodes()};
}

bool ScalarField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double ScalarField::spatial_mean(int level) const {
  double s = 0.0;
  for (double v : slice(level)) s += v;
  return s / static_cast<double>(grid_.nodes());
}

// ---------------------------------------------------------------------------
// ControlField

ControlField::ControlField(SpaceTimeGrid grid)
    : grid_(std::move(grid)),
      values_(grid_.n_t() * grid_.nodes() * grid_.geometry().dim_control, 0.0) {}

ControlField::ControlField(SpaceTimeGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.n_t() * grid_.nodes() * grid_.geometry().dim_control) {
    throw std::invalid_argument("control field payload does not match grid");
  }
}

ControlField ControlField::constant(const SpaceTimeGrid& grid, const Vec& value) {
  if (value.size() != grid.geometry().dim_control) {
    throw std::invalid_argument("constant control has wrong dimension");
  }
  ControlField out(grid);
  for (int l = 0; l < grid.n_t(); ++l)
    for (std::size_t i = 0; i < grid.nodes(); ++i) out.set(l, i, value);
  return out;
}

ControlField ControlField::sample(const SpaceTimeGrid& grid,
                                  const std::function<Vec(double, const Vec&)>& f) {
  ControlField out(grid);
  for (int l = 0; l < grid.n_t(); ++l) {
    const double t = grid.time(l);
    for (std::size_t i = 0; i < grid.nodes(); ++i) out.set(l, i, f(t, grid.node_position(i)));
  }
  return out;
}

Vec ControlField::at(int level, std::size_t node) const {
  const int nc = components();
  Vec u(nc);
  const double* src = values_.data() + (level * grid_.nodes() + node) * nc;
  for (int k = 0; k < nc; ++k) u[k] = src[k];
  return u;
}

void ControlField::set(int level, std::size_t node, const Vec& u) {
  const int nc = components();
  if (u.size() != nc) throw std::invalid_argument("control vector has wrong dimension");
  double* dst = values_.data() + (level * grid_.nodes() + node) * nc;
  for (int k = 0; k < nc; ++k) dst[k] = u[k];
}

std::span<const double> ControlField::slice(int level) const {
  const std::size_t width = grid_.nodes() * components();
  return {values_.data() + level * width, width};
}

bool ControlField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double ControlField::sup_norm() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

ControlField& ControlField::operator+=(const ControlField& other) {
  if (!grid_.same_shape(other.grid_)) throw std::invalid_argument("control grids differ");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ControlField& ControlField::operator-=(const ControlField& other) {
  if (!grid_.same_shape(other.grid_)) throw std::invalid_argument("control grids differ");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ControlField& ControlField::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

ControlField operator+(ControlField a, const ControlField& b) { return a += b; }
ControlField operator-(ControlField a, const ControlField& b) { return a -= b; }
ControlField operator*(double s, ControlField a) { return a *= s; }

// ---------------------------------------------------------------------------
// Finite differences

Vec gradient_at(const SpaceTimeGrid& grid, std::span<const double> f, std::size_t node) {
  const int n = grid.dim();
  const double inv = 0.5 / grid.dx();
  Vec g(n);
  for (int a = 0; a < n; ++a) {
    g[a] = (f[grid.neighbor(node, a, 1)] - f[grid.neighbor(node, a, -1)]) * inv;
  }
  return g;
}

Mat hessian_at(const SpaceTimeGrid& grid, std::span<const double> f, std::size_t node) {
  const int n = grid.dim();
  const double inv_dx2 = 1.0 / (grid.dx() * grid.dx());
  Mat h(n, n);
  for (int a = 0; a < n; ++a) {
    h(a, a) = (f[grid.neighbor(node, a, 1)] - 2.0 * f[node] + f[grid.neighbor(node, a, -1)]) *
              inv_dx2;
    for (int b = a + 1; b < n; ++b) {
      const std::size_t ap = grid.neighbor(node, a, 1);
      const std::size_t am = grid.neighbor(node, a, -1);
      const double mixed = (f[grid.neighbor(ap, b, 1)] - f[grid.neighbor(ap, b, -1)] -
                            f[grid.neighbor(am, b, 1)] + f[grid.neighbor(am, b, -1)]) *
                           0.25 * inv_dx2;
      h(a, b) = mixed;
      h(b, a) = mixed;
    }
  }
  return h;
}

void gradient_slice(const SpaceTimeGrid& grid, std::span<const double> f, std::span<double> out) {
  const int n = grid.dim();
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    const Vec g = gradient_at(grid, f, i);
    for (int a = 0; a < n; ++a) out[i * n + a] = g[a];
  }
}

void hessian_slice(const SpaceTimeGrid& grid, std::span<const double> f, std::span<double> out) {
  const int n = grid.dim();
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    const Mat h = hessian_at(grid, f, i);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) out[(i * n + a) * n + b] = h(a, b);
  }
}

void divergence_slice(const SpaceTimeGrid& grid, std::span<const double> g,
                      std::span<double> out) {
  const int n = grid.dim();
  const double inv = 0.5 / grid.dx();
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    double d = 0.0;
    for (int a = 0; a < n; ++a) {
      d += (g[grid.neighbor(i, a, 1) * n + a] - g[grid.neighbor(i, a, -1) * n + a]) * inv;
    }
    out[i] = d;
  }
}

namespace {

void require_finite(const ScalarField& f) {
  if (!f.all_finite()) throw NumericError("field contains non-finite entries");
}

}  // namespace

std::vector<double> gradient_x(const ScalarField& f, int level) {
  require_finite(f);
  std::vector<double> out(f.grid().nodes() * f.grid().dim());
  gradient_slice(f.grid(), f.slice(level), out);
  return out;
}

std::vector<double> hessian_x(const ScalarField& f, int level) {
  require_finite(f);
  const std::size_t n = f.grid().dim();
  std::vector<double> out(f.grid().nodes() * n * n);
  hessian_slice(f.grid(), f.slice(level), out);
  return out;
}

// ---------------------------------------------------------------------------
// Interpolation

namespace {

// Splits a coordinate scaled to grid units into a cell index and fraction,
// snapping values within 1e-9 of a node onto it.
void split_coordinate(double s, int n, int& index, double& frac) {
  double r = std::round(s);
  if (std::abs(s - r) < 1e-9) s = r;
  const double fl = std::floor(s);
  frac = s - fl;
  index = ((static_cast<int>(fl) % n) + n) % n;
}

void spatial_corners(const SpaceTimeGrid& grid, const Vec& x, HatStencil& st) {
  const int n = grid.dim();
  std::array<int, kMaxDim> base{};
  std::array<double, kMaxDim> frac{};
  for (int a = 0; a < n; ++a) split_coordinate(wrap(x[a]) * grid.n_x(), grid.n_x(), base[a], frac[a]);

  std::size_t origin = 0;
  {
    std::size_t stride = 1;
    for (int a = 0; a < n; ++a) {
      origin += static_cast<std::size_t>(base[a]) * stride;
      stride *= static_cast<std::size_t>(grid.n_x());
    }
  }
  st.corners = 1 << n;
  for (int c = 0; c < st.corners; ++c) {
    std::size_t node = origin;
    double w = 1.0;
    for (int a = 0; a < n; ++a) {
      if (c & (1 << a)) {
        node = grid.neighbor(node, a, 1);
        w *= frac[a];
      } else {
        w *= 1.0 - frac[a];
      }
    }
    st.nodes[c] = node;
    st.weights[c] = w;
  }
}

}  // namespace

HatStencil hat_stencil(const SpaceTimeGrid& grid, double t, const Vec& x) {
  if (!(t >= 0.0 && t <= grid.horizon())) {
    throw std::invalid_argument("interpolation time " + std::to_string(t) + " outside [0, T]");
  }
  if (x.size() != grid.dim()) throw std::invalid_argument("interpolation point has wrong dimension");
  HatStencil st;
  double s = t / grid.dt();
  const double r = std::round(s);
  if (std::abs(s - r) < 1e-9) s = r;
  int level = static_cast<int>(std::floor(s));
  level = std::clamp(level, 0, grid.n_t() - 2);
  st.level = level;
  st.upper_weight = std::clamp(s - level, 0.0, 1.0);
  spatial_corners(grid, x, st);
  return st;
}

double interpolate(const ScalarField& f, double t, const Vec& x) {
  const HatStencil st = hat_stencil(f.grid(), t, x);
  const auto lo = f.slice(st.level);
  const auto hi = f.slice(st.level + 1);
  double a = 0.0, b = 0.0;
  for (int c = 0; c < st.corners; ++c) {
    a += st.weights[c] * lo[st.nodes[c]];
    b += st.weights[c] * hi[st.nodes[c]];
  }
  if (st.upper_weight == 0.0) return a;
  if (st.upper_weight == 1.0) return b;
  return (1.0 - st.upper_weight) * a + st.upper_weight * b;
}

Vec interpolate(const ControlField& u, double t, const Vec& x) {
  const HatStencil st = hat_stencil(u.grid(), t, x);
  const int nc = u.components();
  Vec a = Vec::Zero(nc), b = Vec::Zero(nc);
  for (int c = 0; c < st.corners; ++c) {
    for (int k = 0; k < nc; ++k) {
      a[k] += st.weights[c] * u.component(st.level, st.nodes[c], k);
      b[k] += st.weights[c] * u.component(st.level + 1, st.nodes[c], k);
    }
  }
  if (st.upper_weight == 0.0) return a;
  if (st.upper_weight == 1.0) return b;
  return (1.0 - st.upper_weight) * a + st.upper_weight * b;
}

void interpolate_slice(const SpaceTimeGrid& grid, std::span<const double> slice, int width,
                       const Vec& x, std::span<double> out) {
  HatStencil st;
  spatial_corners(grid, x, st);
  for (int k = 0; k < width; ++k) out[k] = 0.0;
  for (int c = 0; c < st.corners; ++c) {
    for (int k = 0; k < width; ++k) out[k] += st.weights[c] * slice[st.nodes[c] * width + k];
  }
}

// ---------------------------------------------------------------------------
// Norms

double l2_norm(const ScalarField& f) {
  const SpaceTimeGrid& g = f.grid();
  double total = 0.0;
  for (int l = 0; l < g.n_t(); ++l) {
    double s = 0.0;
    for (double v : f.slice(l)) s += v * v;
    total += g.trapezoid_weight(l) * s;
  }
  return std::sqrt(total * g.cell_volume());
}

double l2_inner(const ControlField& a, const ControlField& b) {
  const SpaceTimeGrid& g = a.grid();
  if (!g.same_shape(b.grid())) throw std::invalid_argument("control grids differ");
  double total = 0.0;
  for (int l = 0; l < g.n_t(); ++l) {
    const auto sa = a.slice(l);
    const auto sb = b.slice(l);
    double s = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) s += sa[i] * sb[i];
    total += g.trapezoid_weight(l) * s;
  }
  return total * g.cell_volume();
}

double l2_norm(const ControlField& u) { return std::sqrt(l2_inner(u, u)); }

double h2_norm(const ScalarField& v) {
  const SpaceTimeGrid& g = v.grid();
  const std::size_t n = g.dim();
  std::vector<double> grad(g.nodes() * n), hess(g.nodes() * n * n);
  double total = 0.0;
  for (int l = 0; l < g.n_t(); ++l) {
    gradient_slice(g, v.slice(l), grad);
    hessian_slice(g, v.slice(l), hess);
    double s = 0.0;
    for (double x : v.slice(l)) s += x * x;
    for (double x : grad) s += x * x;
    for (double x : hess) s += x * x;
    total += g.trapezoid_weight(l) * s;
  }
  return std::sqrt(total * g.cell_volume());
}

ScalarField difference(const ScalarField& a, const ScalarField& b) {
  if (!a.grid().same_shape(b.grid())) throw std::invalid_argument("field grids differ");
  std::vector<double> d(a.values().size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.values()[i] - b.values()[i];
  return ScalarField(a.grid(), FieldRole::kGeneric, std::move(d));
}

}  // namespace pgflow
