#pragma once

// Classical baselines: Hamilton trajectories and the transport of a density
// along characteristics.

#include <cstdint>
#include <vector>

#include "hvq/dynamics.hpp"
#include "hvq/fields.hpp"
#include "hvq/system.hpp"
#include "hvq/trajectories.hpp"

namespace hvq {

struct ClassicalState {
  std::vector<double> q;
  std::vector<double> p;  // canonical momentum
};

struct ClassicalTrajectory {
  std::vector<double> times;
  std::vector<ClassicalState> states;
};

/// RK4 on Hamilton's equations (dH/dq by five-point differences). States are
/// recorded every `record_every` steps and at t_final.
ClassicalTrajectory integrate_hamilton(const ClassicalState& initial, const ClassicalSystem& system,
                                       double t_final, double dt, std::size_t record_every = 1);

struct ClassicalEnsembleRun {
  std::vector<double> times;
  std::vector<std::vector<double>> positions;  // particles x dims per snapshot
  std::vector<ScalarField> densities;          // cloud-in-cell estimate per snapshot
  std::vector<std::size_t> escaped;            // particles outside a box grid
  bool post_caustic = false;
  double caustic_time = -1.0;                  // first snapshot with crossing characteristics
};

/// Samples q0 ~ rho0, sets p0 = grad S0(q0) and integrates every particle
/// with the integrate_hamilton code path. Characteristics launched from every
/// grid node in the support of rho0 detect caustics by a sign change of the
/// Jacobian of the flow map.
ClassicalEnsembleRun evolve_classical_ensemble(const ScalarField& rho0, const ScalarField& s0,
                                               const ClassicalSystem& system,
                                               const PropagationOptions& options,
                                               std::size_t n_particles, std::uint64_t seed,
                                               Sampling mode = Sampling::iid);

/// Cloud-in-cell deposit of equal-mass particles, divided by the node
/// quadrature weights so that integrate() of the result is the retained mass.
ScalarField deposit_density(const Grid& grid, std::span<const double> positions,
                            std::size_t* escaped = nullptr);

struct ComparisonPoint {
  double time = 0.0;
  double l1 = 0.0;  // integral |rho_quantum - rho_classical|
  double mean_gap = 0.0;      // max over axes of |<q>_quantum - <q>_classical|
  double variance_gap = 0.0;  // max over axes of the variance difference
};

/// Per-snapshot divergence between a quantum run and a classical ensemble
/// recorded at the same times.
std::vector<ComparisonPoint> classical_limit_compare(const std::vector<Frame>& quantum,
                                                     const ClassicalEnsembleRun& classical);

}  // namespace hvq
