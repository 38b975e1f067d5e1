#pragma once

#include <cmath>
#include <complex>
#include <functional>

#include "hvq/fields.hpp"

namespace hvq::test {

inline ScalarField tabulate(const Grid& grid, const std::function<double(std::span<const double>)>& f) {
  ScalarField out(grid);
  std::vector<double> q(grid.dims());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    grid.coordinates(k, q);
    out[k] = f(q);
  }
  return out;
}

inline ComplexField tabulate_complex(const Grid& grid,
                                     const std::function<complex(std::span<const double>)>& f) {
  ComplexField out(grid);
  std::vector<double> q(grid.dims());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    grid.coordinates(k, q);
    out[k] = f(q);
  }
  return out;
}

/// Gaussian packet with |psi|^2 of width sigma, mean momentum k, zero on box ends.
inline ComplexField gaussian(const Grid& grid, double centre, double sigma, double k = 0.0, double lambda = 1.0) {
  ComplexField psi = tabulate_complex(grid, [&](std::span<const double> q) {
    const double x = q[0] - centre;
    return std::polar(std::exp(-x * x / (4.0 * sigma * sigma)), k * x / lambda);
  });
  for (std::size_t i = 0; i < psi.size(); ++i)
    if (grid.on_box_boundary(i)) psi[i] = 0.0;
  return normalize(psi);
}

inline double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace hvq::test
