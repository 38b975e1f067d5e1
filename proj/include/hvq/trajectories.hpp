#pragma once

// Pilot-wave trajectories under the effective velocity v^i = g^ij (d_j S - A_j).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hvq/dynamics.hpp"
#include "hvq/fields.hpp"
#include "hvq/kernels.hpp"
#include "hvq/system.hpp"

namespace hvq {

/// Velocity of the lambda-branch psi. S = |lambda| arg psi is differentiated
/// through wrapped phase differences; nodes under the amplitude floor take
/// the velocity of the nearest valid node. Throws UnwrapError on vortices.
VectorField effective_velocity(const ComplexField& psi, const ClassicalSystem& system, double lambda_abs);
VectorField effective_velocity(const ComplexField& psi, const GridCoefficients& coefficients,
                               double lambda_abs);

/// One velocity frame per propagated snapshot.
std::vector<kernels::VelocityFrame> velocity_frames(const std::vector<Frame>& frames,
                                                    const GridCoefficients& coefficients,
                                                    double lambda_abs);

struct TrajectoryEnsemble {
  std::size_t dims = 0;
  std::size_t particles = 0;
  std::vector<double> positions;             // particles x dims
  std::vector<double> times;                 // one per history entry
  std::vector<std::vector<double>> history;  // positions at each time

  std::span<const double> position(std::size_t p) const {
    return std::span<const double>(positions).subspan(p * dims, dims);
  }
};

enum class Sampling { iid, stratified };

/// Draws positions from |psi|^2: a cell is chosen by its trapezoidal mass,
/// then the point is uniform inside it. Stratified sampling feeds the cell
/// choice with (i + u) / n instead of independent uniforms.
TrajectoryEnsemble sample_particles(const ComplexField& psi, std::size_t n, std::uint64_t seed,
                                    Sampling mode = Sampling::iid, double time = 0.0);

/// RK4 through the frames (`substeps` per frame interval). History gets one
/// entry per frame. Throws NumericalError naming the first non-finite particle.
TrajectoryEnsemble advect(const TrajectoryEnsemble& ensemble,
                          std::span<const kernels::VelocityFrame> frames, std::size_t substeps = 4);

/// Mass of |psi|^2 in each grid cell (corner average times cell volume),
/// normalized to 1. With `coarsen` > 1, blocks of coarsen^dims cells merge.
std::vector<double> cell_masses(const ComplexField& psi, std::size_t coarsen = 1);
/// Fraction of particles in each (coarsened) cell.
std::vector<double> particle_histogram(const Grid& grid, std::span<const double> positions,
                                       std::size_t coarsen = 1);

/// L1 distance between the particle histogram and the cell masses, in [0, 2].
double born_distance(std::span<const double> positions, const ComplexField& psi,
                     std::size_t coarsen = 1);
double born_distance(const TrajectoryEnsemble& ensemble, const ComplexField& psi,
                     std::size_t coarsen = 1);

/// Header `time,particle,<coords>`.
void write_trajectories_csv(std::ostream& out, const TrajectoryEnsemble& ensemble,
                            const std::vector<std::string>& coordinate_names);

}  // namespace hvq
