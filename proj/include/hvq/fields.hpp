#pragma once

// Uniform tensor-product grids and the fields that live on them.
//
// Nodes are stored row-major (last axis fastest). A `box` axis includes both
// end points; wave functions are pinned to zero there (Dirichlet). A
// `periodic` axis has `points` nodes with spacing (max - min) / points and
// wraps around.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hvq/errors.hpp"

namespace hvq {

using complex = std::complex<double>;

enum class Boundary : std::uint8_t { box = 0, periodic = 1 };

struct Axis {
  double min = 0.0;
  double max = 1.0;
  std::size_t points = 3;
  Boundary boundary = Boundary::box;

  double spacing() const noexcept {
    return boundary == Boundary::periodic ? (max - min) / static_cast<double>(points)
                                          : (max - min) / static_cast<double>(points - 1);
  }
  double coordinate(std::size_t i) const noexcept {
    return min + static_cast<double>(i) * spacing();
  }
  /// Number of cells between nodes (periodic axes close the last one).
  std::size_t cells() const noexcept {
    return boundary == Boundary::periodic ? points : points - 1;
  }
  /// Physical extent covered by the nodes' cells.
  double length() const noexcept { return max - min; }

  friend bool operator==(const Axis&, const Axis&) = default;
};

class Grid {
 public:
  static constexpr std::size_t kDefaultMaxNodes = std::size_t{1} << 24;

  explicit Grid(std::vector<Axis> axes, std::size_t max_nodes = kDefaultMaxNodes);

  /// 1D convenience constructor.
  static Grid line(double min, double max, std::size_t points, Boundary boundary = Boundary::box);

  std::size_t dims() const noexcept { return axes_.size(); }
  std::size_t size() const noexcept { return size_; }
  const Axis& axis(std::size_t a) const { return axes_.at(a); }
  const std::vector<Axis>& axes() const noexcept { return axes_; }
  std::size_t stride(std::size_t a) const noexcept { return strides_[a]; }
  double spacing(std::size_t a) const noexcept { return axes_[a].spacing(); }

  std::size_t index_along(std::size_t flat, std::size_t a) const noexcept {
    return (flat / strides_[a]) % axes_[a].points;
  }
  void unravel(std::size_t flat, std::span<std::size_t> idx) const noexcept;
  std::size_t ravel(std::span<const std::size_t> idx) const noexcept;

  double coordinate(std::size_t flat, std::size_t a) const noexcept {
    return axes_[a].coordinate(index_along(flat, a));
  }
  void coordinates(std::size_t flat, std::span<double> out) const noexcept;

  /// Neighbour `flat + step*e_a`, wrapping on periodic axes; returns false if
  /// the step leaves a box axis.
  bool neighbour(std::size_t flat, std::size_t a, int step, std::size_t& out) const noexcept;

  /// True for nodes on the end points of any box axis.
  bool on_box_boundary(std::size_t flat) const noexcept;

  /// Trapezoidal weight of a node (product of per-axis weights).
  double quadrature_weight(std::size_t flat) const noexcept;
  double cell_volume() const noexcept;

  friend bool operator==(const Grid& a, const Grid& b) { return a.axes_ == b.axes_; }

 private:
  std::vector<Axis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

template <class T>
class Field {
 public:
  using value_type = T;

  explicit Field(Grid grid) : grid_(std::move(grid)), values_(grid_.size(), T{}) {}
  Field(Grid grid, std::vector<T> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw InvalidArgument("field value count does not match grid size");
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const T> values() const noexcept { return values_; }
  std::span<T> values() noexcept { return values_; }
  const std::vector<T>& data() const noexcept { return values_; }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const Field& a, const Field& b) {
    return a.grid_ == b.grid_ && a.values_ == b.values_;
  }

 private:
  Grid grid_;
  std::vector<T> values_;
};

using ScalarField = Field<double>;
using ComplexField = Field<complex>;

/// One field per axis.
struct VectorField {
  std::vector<ScalarField> components;

  const Grid& grid() const { return components.front().grid(); }
  std::size_t dims() const noexcept { return components.size(); }
};

/// Madelung pair: psi = R exp(i S / |lambda|). `valid` marks nodes where the
/// amplitude exceeds the node floor; S elsewhere is borrowed from the nearest
/// valid node.
struct PolarPair {
  ScalarField R;
  ScalarField S;
  double lambda_abs = 1.0;
  std::vector<std::uint8_t> valid;
};

/// Relative amplitude below which the phase is considered undefined.
inline constexpr double kNodeFloor = 1e-12;

void require_same_grid(const Grid& a, const Grid& b, const char* what);

// Quadrature (trapezoidal).
double integrate(const ScalarField& f);
double norm_squared(const ComplexField& psi);
ScalarField density(const ComplexField& psi);

/// Scales psi to unit trapezoidal norm. Throws InvalidArgument on zero norm.
ComplexField normalize(const ComplexField& psi);

/// Second-order derivative along `axis`: central in the interior, one-sided
/// second order at box ends, wrap-around on periodic axes.
ScalarField gradient(const ScalarField& f, std::size_t axis);

/// Second-order d^2 f / dq_i dq_j. Diagonal terms use the 3-point stencil
/// (4-point one-sided at box ends); mixed terms compose gradients.
ScalarField second_derivative(const ScalarField& f, std::size_t axis_i, std::size_t axis_j);

/// R = |psi|, S = |lambda| * unwrapped arg(psi). Throws UnwrapError when an
/// elementary loop of valid nodes carries a phase residue above pi/2.
PolarPair to_polar(const ComplexField& psi, double lambda_abs);
ComplexField from_polar(const PolarPair& pair);

/// dS/dq_axis from wrapped phase differences, so periodic axes carrying a
/// net winding differentiate correctly across the seam. Same stencils as
/// gradient().
ScalarField phase_gradient(const PolarPair& pair, std::size_t axis);

/// Multilinear interpolation at an arbitrary point. Points outside a box axis
/// are clamped to it; periodic axes wrap.
double interpolate(const ScalarField& f, std::span<const double> point);

/// Local cubic (4-point Lagrange) interpolation of a 1D field. Nodes beyond
/// a box axis count as zero.
double interpolate_cubic_1d(const ScalarField& f, double x);
complex interpolate_cubic_1d(const ComplexField& f, double x);

}  // namespace hvq
