#pragma once

// lambda-ensembles: one propagated branch per quadrature node of P(lambda),
// their marginal density, and superpositions with the hidden-variable
// interference term.

#include <complex>
#include <vector>

#include "hvq/dynamics.hpp"
#include "hvq/fields.hpp"
#include "hvq/hidden.hpp"
#include "hvq/system.hpp"

namespace hvq {

/// Branches in ascending lambda. Branches of equal |lambda| share one field.
struct LambdaEnsemble {
  double time = 0.0;
  std::vector<LambdaNode> nodes;
  std::vector<std::size_t> field_of;  // node -> index into fields
  std::vector<ComplexField> fields;   // one per distinct |lambda|, ascending

  std::size_t size() const noexcept { return nodes.size(); }
  const ComplexField& psi(std::size_t branch) const { return fields[field_of[branch]]; }
};

struct EnsembleRun {
  std::vector<double> magnitudes;      // distinct |lambda| propagated
  std::vector<LambdaEnsemble> series;  // one per snapshot
};

/// Initial state in action form: every branch starts from R0 exp(i S0/|lambda|).
struct ActionState {
  ScalarField R;
  ScalarField S;
};

/// Same initial psi0 for every branch; each distinct |lambda| is propagated
/// once, in parallel. psi0 must be normalized.
EnsembleRun propagate_ensemble(const ComplexField& psi0, const ClassicalSystem& system,
                               const LambdaDistribution& dist, std::size_t n_nodes,
                               const PropagationOptions& options);
EnsembleRun propagate_ensemble(const ActionState& initial, const ClassicalSystem& system,
                               const LambdaDistribution& dist, std::size_t n_nodes,
                               const PropagationOptions& options);

/// rho = sum_k w_k |psi_k|^2, summed in ascending lambda.
ScalarField marginal_density(const LambdaEnsemble& ensemble);

struct Superposition {
  ScalarField density;       // sum_k w_k |a psi1_k + b psi2_k|^2
  ScalarField interference;  // density - (|a|^2 rho1 + |b|^2 rho2)
  ScalarField normalized;    // density / integral(density)
  double normalization = 1.0;  // the factor applied
};

/// psi1[k], psi2[k] are the branch fields at nodes[k].
Superposition superposition_density(const std::vector<ComplexField>& psi1,
                                    const std::vector<ComplexField>& psi2, complex a, complex b,
                                    const std::vector<LambdaNode>& nodes);
/// lambda-independent (R, S) pairs: branch fields are R exp(i S/|lambda_k|).
Superposition superposition_density(const ActionState& first, const ActionState& second, complex a,
                                    complex b, const LambdaDistribution& dist, std::size_t n_nodes);

/// sum_k w_k exp(i dS / |lambda_k|).
complex interference_factor(const LambdaDistribution& dist, std::size_t n_nodes, double delta_s);

struct DoubleSlitConfig {
  Grid grid = Grid::line(-1.0, 1.0, 3);
  double mass = 1.0;
  double separation = 4.0;  // packet centres at -separation and +separation
  double width = 0.5;       // initial sigma of |psi|^2
  double momentum = 4.0;    // packets move towards each other with +-momentum
  double t_final = 1.0;
  double dt = 1e-2;
  double central_half_width = 1.0;
  std::size_t n_nodes = 32;
};

struct DoubleSlitResult {
  ScalarField intensity;  // normalized
  double visibility = 0.0;
  double overlap = 0.0;   // initial overlap of the two packets
  double normalization = 1.0;
  std::vector<double> magnitudes;
};

/// Fringe visibility (max - min)/(max + min) of f over |q| <= half_width.
double fringe_visibility(const ScalarField& f, double half_width);

DoubleSlitResult double_slit(const DoubleSlitConfig& config, const LambdaDistribution& dist);

}  // namespace hvq
