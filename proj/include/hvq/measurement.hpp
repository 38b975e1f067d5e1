#pragma once

// Von Neumann pointer models. A system eigenstate with eigenvalue l shifts
// the pointer packet by g l' T, where l' = |lambda| l / hbar is the outcome
// inferred in the lambda-branch.

#include <complex>
#include <vector>

#include "hvq/fields.hpp"
#include "hvq/hidden.hpp"

namespace hvq {

/// q2(T) - q2(0) = g A1 T.
double classical_pointer_shift(double a1, double coupling, double duration);

struct EigenComponent {
  double l = 0.0;
  complex c{1.0, 0.0};
};

struct MeasurementSetup {
  double coupling = 1.0;
  double duration = 1.0;
  std::vector<EigenComponent> components;
  ComplexField pointer0;  // 1D, normalized
  LambdaDistribution dist = LambdaDistribution::binary();
};

/// Throws InvalidArgument unless sum |c_l|^2 = 1 and the pointer is a
/// normalized 1D field.
void validate_setup(const MeasurementSetup& setup);

/// Pointer shift g (|lambda|/hbar) l T.
double pointer_shift(double l, double lambda, const MeasurementSetup& setup);

/// phi0(q2 - shift). Whole-node shifts copy values; fractional shifts use
/// local cubic interpolation. Throws InvalidArgument if more than 1e-9 of the
/// packet's mass would leave a box grid.
ComplexField eigenstate_pointer(double l, double lambda, const MeasurementSetup& setup);

struct PointerPeak {
  double location = 0.0;  // grid node of the maximum
  double mass = 0.0;      // mass of the watershed basin
  double inferred = 0.0;  // location / (g T)
};

struct PointerStatistics {
  ScalarField pointer_density;
  double inferred_mean = 0.0;
  double inferred_variance = 0.0;
  std::vector<PointerPeak> peaks;
  bool ambiguous = false;  // peaks overlap or do not match the eigenvalues
};

/// rho(q2) = sum_l |c_l|^2 sum_k w_k |phi0(q2 - g (|lambda_k|/hbar) l T)|^2
/// (each shifted packet renormalized), exact moments of l' under the law, and a
/// watershed peak table with maxima closer than `min_separation` merged.
PointerStatistics pointer_distribution(const MeasurementSetup& setup, std::size_t n_lambda_nodes,
                                       double min_separation = 0.0);

/// Watershed segmentation of a 1D density.
std::vector<PointerPeak> find_peaks(const ScalarField& density, double min_separation,
                                    double relative_threshold = 1e-6);

struct PositionMeasurementReport {
  ScalarField quantum;    // |psi(T)|^2
  ScalarField classical;  // rho0 carried along the characteristics
  double max_difference = 0.0;
  double cfl = 0.0;       // max |g q1| dt / dq2
  bool cfl_exceeded = false;
  double norm_drift = 0.0;
  double solve_residual = 0.0;
};

/// Grid axes are (q1, q2); q2 must be a box axis. Quantum side: Crank-Nicolson
/// for i hbar dpsi/dt = g q1 p2 psi, i.e. dpsi/dt = -g q1 dpsi/dq2, from
/// sqrt(rho0) exp(i S0/hbar). Classical side: rho0(q1, q2 - g q1 T).
PositionMeasurementReport position_measurement_check(const ScalarField& rho0, const ScalarField& s0,
                                                     double coupling, double duration, double dt,
                                                     double hbar = 1.0);

}  // namespace hvq
