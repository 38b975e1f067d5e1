#pragma once

// Generalized Schroedinger propagation for one lambda branch:
//   i|lambda| dpsi/dt = H psi,
//   H = 1/2 (-i|lambda| d_i - A_i) g^ij (-i|lambda| d_j - A_j) + V.

#include <cstdint>
#include <vector>

#include <Eigen/Sparse>

#include "hvq/errors.hpp"
#include "hvq/fields.hpp"
#include "hvq/system.hpp"

namespace hvq {

using SparseRowMatrix = Eigen::SparseMatrix<complex, Eigen::RowMajor, std::int64_t>;

/// Sparse Hermitian operator over the active nodes of a grid (every node
/// except the end points of box axes, where psi is pinned to zero).
struct DiscreteHamiltonian {
  Grid grid;
  double lambda_abs = 1.0;
  std::vector<std::size_t> active;  // flat index of each active node
  SparseRowMatrix matrix;

  std::size_t dimension() const noexcept { return active.size(); }

  /// Active-node values of psi (box boundary values are dropped).
  Eigen::VectorXcd gather(const ComplexField& psi) const;
  ComplexField scatter(const Eigen::VectorXcd& values) const;

  /// H psi on the grid (zero on box boundaries).
  ComplexField apply(const ComplexField& psi) const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const;

  Eigen::MatrixXcd dense() const;
};

/// Flux-form assembly: on each cell face (same-axis terms) and each plaquette
/// (mixed terms) the momentum operator is a two-point difference with g and A
/// averaged to the face or cell centre, and H = sum Pi^dagger g Pi / 2 + V.
DiscreteHamiltonian build_hamiltonian(const ClassicalSystem& system, const Grid& grid,
                                      double lambda_abs);
DiscreteHamiltonian build_hamiltonian(const GridCoefficients& coefficients, double lambda_abs);

/// <psi|H|psi> with trapezoidal weights.
double energy(const DiscreteHamiltonian& h, const ComplexField& psi);

/// Eigenvalues in ascending order (dense solve, small grids only).
std::vector<double> lowest_eigenvalues(const DiscreteHamiltonian& h, std::size_t count);

/// (1 + i dt H / 2|lambda|) psi' = (1 - i dt H / 2|lambda|) psi, LU-factored once.
class CrankNicolson {
 public:
  static constexpr double kResidualTolerance = 1e-10;

  CrankNicolson(const DiscreteHamiltonian& h, double dt);

  ComplexField step(const ComplexField& psi) const;
  /// Advances active-node values in place; returns the relative residual.
  double step(Eigen::VectorXcd& x) const;

  double dt() const noexcept { return dt_; }
  const DiscreteHamiltonian& hamiltonian() const noexcept { return *h_; }

 private:
  const DiscreteHamiltonian* h_;
  double dt_;
  double c_;
  Eigen::SparseMatrix<complex> a_;
  Eigen::SparseLU<Eigen::SparseMatrix<complex>> lu_;
};

ComplexField step_crank_nicolson(const ComplexField& psi, const DiscreteHamiltonian& h, double dt);

struct Frame {
  double time = 0.0;
  ComplexField psi;
};

/// Thrown when the state stops being finite; carries the last finite frame.
class PropagationAbort : public NumericalError {
 public:
  PropagationAbort(const std::string& what, Frame last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const Frame& last_good() const noexcept { return last_good_; }

 private:
  Frame last_good_;
};

struct PropagationOptions {
  double t_final = 1.0;
  double dt = 1e-2;
  std::size_t snapshot_every = 1;  // in steps
};

/// Number of steps, checking that dt divides t_final.
std::size_t step_count(double t_final, double dt);

/// Frames at t = 0, every `snapshot_every` steps and t_final. Only |lambda|
/// enters.
std::vector<Frame> propagate(const ComplexField& psi0, const ClassicalSystem& system, double lambda,
                             const PropagationOptions& options);
std::vector<Frame> propagate(const ComplexField& psi0, const DiscreteHamiltonian& h,
                             const PropagationOptions& options);

}  // namespace hvq
