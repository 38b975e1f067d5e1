#pragma once

// A classical particle in external potentials:
//   H(q, p) = 1/2 g^ij(q) (p_i - A_i(q)) (p_j - A_j(q)) + V(q)
// with the mass folded into the inverse metric g^ij.

#include <span>
#include <string>
#include <vector>

#include "hvq/expr.hpp"
#include "hvq/fields.hpp"

namespace hvq {

class ClassicalSystem {
 public:
  /// Throws InvalidArgument if the metric is not symmetric entry by entry,
  /// shapes disagree, or any coefficient depends on time.
  ClassicalSystem(std::vector<std::string> coordinates,
                  std::vector<std::vector<expr::Expression>> metric_inverse,
                  std::vector<expr::Expression> vector_potential,
                  expr::Expression scalar_potential);

  /// Parses every coefficient from text.
  static ClassicalSystem parse(const std::vector<std::string>& coordinates,
                               const std::vector<std::vector<std::string>>& metric_inverse,
                               const std::vector<std::string>& vector_potential,
                               const std::string& scalar_potential);

  /// g^ij = delta^ij / mass, A = 0.
  static ClassicalSystem cartesian(const std::vector<std::string>& coordinates, double mass,
                                   const std::string& scalar_potential = "0");

  std::size_t dims() const noexcept { return coordinates_.size(); }
  const std::vector<std::string>& coordinates() const noexcept { return coordinates_; }
  const expr::Expression& metric_inverse(std::size_t i, std::size_t j) const {
    return metric_[i * dims() + j];
  }
  const expr::Expression& vector_potential(std::size_t i) const { return vector_potential_[i]; }
  const expr::Expression& scalar_potential() const noexcept { return scalar_potential_; }

  /// Pointwise coefficients; g is dims x dims row-major. Returns false on an
  /// evaluation failure instead of throwing.
  bool coefficients(std::span<const double> q, std::span<double> g, std::span<double> a,
                    double& v) const noexcept;

  bool hamiltonian(std::span<const double> q, std::span<const double> p,
                   double& out) const noexcept;
  double hamiltonian(std::span<const double> q, std::span<const double> p) const;

  /// q_dot^i = g^ij (p_j - A_j).
  bool velocity(std::span<const double> q, std::span<const double> p,
                std::span<double> out) const noexcept;

 private:
  std::vector<std::string> coordinates_;
  std::vector<expr::Expression> metric_;
  std::vector<expr::Expression> vector_potential_;
  expr::Expression scalar_potential_;
};

/// Coefficients sampled on every node of a grid.
struct GridCoefficients {
  Grid grid;
  std::vector<ScalarField> metric;  // dims x dims row-major
  std::vector<ScalarField> vector_potential;
  ScalarField scalar_potential;
  std::vector<bool> metric_zero;    // entry is the literal 0

  const ScalarField& g(std::size_t i, std::size_t j) const { return metric[i * grid.dims() + j]; }
};

/// Samples every coefficient and checks that g^ij is positive definite at
/// every node (DomainError names the first failing node).
GridCoefficients evaluate_coefficients(const ClassicalSystem& system, const Grid& grid);

}  // namespace hvq
