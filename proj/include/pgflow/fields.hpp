#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pgflow/core_problem.hpp"

namespace pgflow {

/// Uniform grid on [0,T] x torus. n_t time levels (dt = T/(n_t-1)) and n_x
/// points per axis (dx = 1/n_x); spatial indices wrap modulo n_x.
class SpaceTimeGrid {
 public:
  SpaceTimeGrid(TorusGeometry geometry, double horizon, int n_t, int n_x);

  const TorusGeometry& geometry() const { return geometry_; }
  int dim() const { return geometry_.dim_state; }
  double horizon() const { return horizon_; }
  int n_t() const { return n_t_; }
  int n_x() const { return n_x_; }
  double dt() const { return horizon_ / (n_t_ - 1); }
  double dx() const { return 1.0 / n_x_; }
  /// dx^n, the rectangle-rule weight of one node.
  double cell_volume() const { return cell_volume_; }
  /// Nodes per time slice, n_x^n.
  std::size_t nodes() const { return nodes_; }

  double time(int level) const;
  /// Trapezoid weight of a time level (dt/2 at the ends, dt inside).
  double trapezoid_weight(int level) const;

  int axis_index(std::size_t node, int axis) const;
  Vec node_position(std::size_t node) const;
  /// Periodic neighbor of a node shifted by offset along axis.
  std::size_t neighbor(std::size_t node, int axis, int offset) const;

  bool same_shape(const SpaceTimeGrid& other) const;

 private:
  TorusGeometry geometry_;
  double horizon_;
  int n_t_;
  int n_x_;
  std::size_t nodes_;
  double cell_volume_;
  std::array<std::size_t, kMaxDim> stride_{};
};

enum class FieldRole : std::uint32_t { kValue = 0, kDensity = 1, kGeneric = 2, kControl = 3 };

const char* role_name(FieldRole role);

/// Grid-sampled scalar function of (t, x), time-major storage.
class ScalarField {
 public:
  ScalarField(SpaceTimeGrid grid, FieldRole role);
  ScalarField(SpaceTimeGrid grid, FieldRole role, std::vector<double> values);

  /// Samples f(t, x) at every node.
  static ScalarField sample(const SpaceTimeGrid& grid, FieldRole role,
                            const std::function<double(double, const Vec&)>& f);

  const SpaceTimeGrid& grid() const { return grid_; }
  FieldRole role() const { return role_; }
  void set_role(FieldRole role) { role_ = role; }

  std::span<double> slice(int level);
  std::span<const double> slice(int level) const;
  double& at(int level, std::size_t node) { return values_[level * grid_.nodes() + node]; }
  double at(int level, std::size_t node) const { return values_[level * grid_.nodes() + node]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;
  /// Rectangle-rule spatial mean of one level.
  double spatial_mean(int level) const;

 private:
  SpaceTimeGrid grid_;
  FieldRole role_;
  std::vector<double> values_;
};

/// Grid-sampled control u(t, x) in R^{n'}; also the parameter vector of the
/// grid parametrization. Storage is [level][node][component].
class ControlField {
 public:
  explicit ControlField(SpaceTimeGrid grid);
  ControlField(SpaceTimeGrid grid, std::vector<double> values);

  static ControlField constant(const SpaceTimeGrid& grid, const Vec& value);
  static ControlField sample(const SpaceTimeGrid& grid,
                             const std::function<Vec(double, const Vec&)>& f);

  const SpaceTimeGrid& grid() const { return grid_; }
  int components() const { return grid_.geometry().dim_control; }

  Vec at(int level, std::size_t node) const;
  void set(int level, std::size_t node, const Vec& u);
  double& component(int level, std::size_t node, int k) {
    return values_[(level * grid_.nodes() + node) * components() + k];
  }
  double component(int level, std::size_t node, int k) const {
    return values_[(level * grid_.nodes() + node) * components() + k];
  }

  std::span<const double> slice(int level) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;
  double sup_norm() const;

  ControlField& operator+=(const ControlField& other);
  ControlField& operator-=(const ControlField& other);
  ControlField& operator*=(double s);

 private:
  SpaceTimeGrid grid_;
  std::vector<double> values_;
};

ControlField operator+(ControlField a, const ControlField& b);
ControlField operator-(ControlField a, const ControlField& b);
ControlField operator*(double s, ControlField a);

// Slice-level calculus with periodic second-order central differences.
// A slice holds one time level (nodes() entries).

Vec gradient_at(const SpaceTimeGrid& grid, std::span<const double> f, std::size_t node);
Mat hessian_at(const SpaceTimeGrid& grid, std::span<const double> f, std::size_t node);

/// Out has nodes() * n entries, [node][axis].
void gradient_slice(const SpaceTimeGrid& grid, std::span<const double> f, std::span<double> out);
/// Out has nodes() * n * n entries, [node][row][col].
void hessian_slice(const SpaceTimeGrid& grid, std::span<const double> f, std::span<double> out);
/// Central divergence of a vector field stored [node][axis]; the negative
/// adjoint of gradient_slice under the rectangle rule.
void divergence_slice(const SpaceTimeGrid& grid, std::span<const double> g, std::span<double> out);

std::vector<double> gradient_x(const ScalarField& f, int level);
std::vector<double> hessian_x(const ScalarField& f, int level);

/// Tensor-product hat-function weights of an off-grid point: linear in time
/// between two levels and multilinear in space with periodic wrap.
struct HatStencil {
  static constexpr int kMaxCorners = 1 << kMaxDim;
  int level = 0;  // lower time level; upper is level + 1 (clamped to n_t - 1)
  double upper_weight = 0.0;
  int corners = 0;
  std::array<std::size_t, kMaxCorners> nodes{};
  std::array<double, kMaxCorners> weights{};
};

/// Throws std::invalid_argument when t lies outside [0, T].
HatStencil hat_stencil(const SpaceTimeGrid& grid, double t, const Vec& x);

double interpolate(const ScalarField& f, double t, const Vec& x);
Vec interpolate(const ControlField& u, double t, const Vec& x);
/// Spatial multilinear interpolation of an arbitrary per-node array with
/// `width` entries per node, at a fixed level; writes width values.
void interpolate_slice(const SpaceTimeGrid& grid, std::span<const double> slice, int width,
                       const Vec& x, std::span<double> out);

/// Trapezoid in time, rectangle in space.
double l2_norm(const ScalarField& f);
double l2_norm(const ControlField& u);
double l2_inner(const ControlField& a, const ControlField& b);
/// sqrt of the quadrature of |V|^2 + |grad V|^2 + |hess V|^2.
double h2_norm(const ScalarField& v);

ScalarField difference(const ScalarField& a, const ScalarField& b);

}  // namespace pgflow
