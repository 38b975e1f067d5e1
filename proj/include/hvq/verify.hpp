#pragma once

// Residuals of the Madelung-form equations evaluated on discrete solutions:
// the identity
//   1/4 d_i W d_j W / W^2 = 1/2 d_i d_j W / W - d_i d_j R / R   (R = sqrt W),
// the HJM equation
//   d_t S + 1/2 g^ij (d_i S - A_i)(d_j S - A_j) + V
//     - lambda^2/2 (g^ij d_i d_j R / R + d_i g^ij d_j R / R) = 0,
// and the symmetrized continuity equation
//   d_t W + d_i (g^ij (d_j S - A_j) W) = 0.

#include <cstdint>
#include <vector>

#include "hvq/dynamics.hpp"
#include "hvq/fields.hpp"
#include "hvq/system.hpp"

namespace hvq {

struct ResidualReport {
  std::vector<ScalarField> fields;   // one per component (index pair for the identity)
  std::vector<std::uint8_t> mask;    // nodes that enter max_residual
  double max_residual = 0.0;
  std::size_t argmax = 0;            // flat grid index of the maximum
  std::size_t component = 0;         // which field holds it
};

struct ResidualOptions {
  std::size_t margin = 3;          // nodes excluded next to box ends
  double support_floor = 1e-3;     // relative amplitude below which a node is masked
  std::size_t neighbourhood = 2;   // masked radius around low-amplitude nodes
};

/// Residual per index pair (i <= j). Throws DomainError on a non-positive
/// node. Only the box-end margin is masked.
ResidualReport identity_check(const ScalarField& omega, std::size_t margin = 3);

/// psi0, psi1 are consecutive snapshots dt apart of the branch |lambda|.
ResidualReport hjm_residual(const ComplexField& psi0, const ComplexField& psi1, double dt,
                            const ClassicalSystem& system, double lambda,
                            const ResidualOptions& options = {});
ResidualReport continuity_residual(const ComplexField& psi0, const ComplexField& psi1, double dt,
                                   const ClassicalSystem& system, double lambda,
                                   const ResidualOptions& options = {});

struct SymmetryCheck {
  bool symmetric = false;         // every frame bit-identical
  bool premise_violated = false;  // initial fields already differ
  std::size_t first_mismatch = 0; // frame index of the first difference
};

SymmetryCheck sign_symmetry_check(const std::vector<Frame>& positive, const std::vector<Frame>& negative);

/// Nodes kept by the margin and low-amplitude neighbourhood rules.
std::vector<std::uint8_t> residual_mask(const ScalarField& amplitude, const ResidualOptions& options);

}  // namespace hvq
