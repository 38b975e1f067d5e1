#include "hvq/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hvq/kernels.hpp"

namespace hvq {

namespace {

ComplexField action_to_psi(const ActionState& s, double lambda_abs) {
  require_same_grid(s.R.grid(), s.S.grid(), "action state");
  ComplexField psi(s.R.grid());
  for (std::size_t k = 0; k < psi.size(); ++k) psi[k] = std::polar(s.R[k], s.S[k] / lambda_abs);
  return psi;
}

std::size_t magnitude_index(const std::vector<LambdaNode>& mags, double lambda) {
  const double m = std::abs(lambda);
  for (std::size_t i = 0; i < mags.size(); ++i)
    if (mags[i].lambda == m) return i;
  throw NumericalError("quadrature node without a matching magnitude");
}

template <class MakeInitial>
EnsembleRun run_branches(const Grid& grid, MakeInitial make_initial, const ClassicalSystem& system,
                         const LambdaDistribution& dist, std::size_t n_nodes,
                         const PropagationOptions& options) {
  const auto mags = dist.magnitudes(n_nodes);
  const auto nodes = dist.quadrature_nodes(n_nodes);
  const GridCoefficients coefficients = evaluate_coefficients(system, grid);
  std::vector<std::vector<Frame>> frames(mags.size());
  kernels::parallel_for(mags.size(), [&](std::size_t i) {
    const DiscreteHamiltonian h = build_hamiltonian(coefficients, mags[i].lambda);
    frames[i] = propagate(make_initial(mags[i].lambda), h, options);
  });

  EnsembleRun run;
  for (const auto& m : mags) run.magnitudes.push_back(m.lambda);
  std::vector<std::size_t> field_of;
  for (const auto& n : nodes) field_of.push_back(magnitude_index(mags, n.lambda));
  for (std::size_t s = 0; s < frames.front().size(); ++s) {
    LambdaEnsemble e{frames.front()[s].time, nodes, field_of, {}};
    for (auto& f : frames) e.fields.push_back(f[s].psi);
    run.series.push_back(std::move(e));
  }
  return run;
}

void check_normalized(const ComplexField& psi) {
  const double n = norm_squared(psi);
  if (std::abs(n - 1.0) > 1e-8) throw InvalidArgument("initial wave function must be normalized");
}

}  // namespace

EnsembleRun propagate_ensemble(const ComplexField& psi0, const ClassicalSystem& system,
                               const LambdaDistribution& dist, std::size_t n_nodes,
                               const PropagationOptions& options) {
  check_normalized(psi0);
  return run_branches(psi0.grid(), [&](double) { return psi0; }, system, dist, n_nodes, options);
}

EnsembleRun propagate_ensemble(const ActionState& initial, const ClassicalSystem& system,
                               const LambdaDistribution& dist, std::size_t n_nodes,
                               const PropagationOptions& options) {
  check_normalized(action_to_psi(initial, dist.hbar()));
  return run_branches(initial.R.grid(), [&](double m) { return action_to_psi(initial, m); }, system,
                      dist, n_nodes, options);
}

ScalarField marginal_density(const LambdaEnsemble& e) {
  if (e.nodes.empty()) throw InvalidArgument("empty ensemble");
  ScalarField rho(e.fields.front().grid());
  for (std::size_t b = 0; b < e.size(); ++b) {
    const ComplexField& psi = e.psi(b);
    const double w = e.nodes[b].weight;
    for (std::size_t k = 0; k < rho.size(); ++k) rho[k] += w * std::norm(psi[k]);
  }
  return rho;
}

Superposition superposition_density(const std::vector<ComplexField>& psi1,
                                    const std::vector<ComplexField>& psi2, complex a, complex b,
                                    const std::vector<LambdaNode>& nodes) {
  if (psi1.size() != nodes.size() || psi2.size() != nodes.size() || nodes.empty())
    throw InvalidArgument("superposition needs one field per quadrature node for each component");
  const Grid& grid = psi1.front().grid();
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    require_same_grid(psi1[k].grid(), grid, "superposition_density");
    require_same_grid(psi2[k].grid(), grid, "superposition_density");
  }
  Superposition out{ScalarField(grid), ScalarField(grid), ScalarField(grid), 1.0};
  const double a2 = std::norm(a), b2 = std::norm(b);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double w = nodes[k].weight;
    for (std::size_t q = 0; q < grid.size(); ++q) {
      const complex u = psi1[k][q], v = psi2[k][q];
      const double total = std::norm(a * u + b * v);
      out.density[q] += w * total;
      out.interference[q] += w * (total - a2 * std::norm(u) - b2 * std::norm(v));
    }
  }
  const double mass = integrate(out.density);
  if (!(mass > 0.0)) throw InvalidArgument("superposition has zero norm");
  out.normalization = 1.0 / mass;
  for (std::size_t q = 0; q < grid.size(); ++q) out.normalized[q] = out.density[q] * out.normalization;
  return out;
}

Superposition superposition_density(const ActionState& first, const ActionState& second, complex a,
                                    complex b, const LambdaDistribution& dist, std::size_t n_nodes) {
  const auto nodes = dist.quadrature_nodes(n_nodes);
  std::vector<ComplexField> p1, p2;
  for (const auto& n : nodes) {
    p1.push_back(action_to_psi(first, std::abs(n.lambda)));
    p2.push_back(action_to_psi(second, std::abs(n.lambda)));
  }
  return superposition_density(p1, p2, a, b, nodes);
}

complex interference_factor(const LambdaDistribution& dist, std::size_t n_nodes, double delta_s) {
  complex s{};
  for (const auto& n : dist.quadrature_nodes(n_nodes))
    s += n.weight * std::polar(1.0, delta_s / std::abs(n.lambda));
  return s;
}

double fringe_visibility(const ScalarField& f, double half_width) {
  const Grid& g = f.grid();
  if (g.dims() != 1) throw InvalidArgument("fringe visibility needs a 1D profile");
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (std::abs(g.coordinate(k, 0)) > half_width) continue;
    lo = std::min(lo, f[k]);
    hi = std::max(hi, f[k]);
  }
  if (!(hi >= lo)) throw InvalidArgument("central region contains no grid nodes");
  return hi + lo > 0.0 ? (hi - lo) / (hi + lo) : 0.0;
}

DoubleSlitResult double_slit(const DoubleSlitConfig& c, const LambdaDistribution& dist) {
  const Grid& grid = c.grid;
  if (grid.dims() != 1) throw InvalidArgument("double slit runs on a 1D grid");
  if (!(c.width > 0.0) || !(c.mass > 0.0)) throw InvalidArgument("packet width and mass must be positive");
  auto packet = [&](double centre, double p) {
    ActionState s{ScalarField(grid), ScalarField(grid)};
    const double amp = std::pow(2.0 * std::numbers::pi * c.width * c.width, -0.25);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double q = grid.coordinate(k, 0);
      s.R[k] = amp * std::exp(-(q - centre) * (q - centre) / (4.0 * c.width * c.width));
      s.S[k] = p * (q - centre);
    }
    return s;
  };
  const ActionState left = packet(-c.separation, c.momentum);
  const ActionState right = packet(c.separation, -c.momentum);

  DoubleSlitResult result{ScalarField(grid), 0.0, 0.0, 1.0, {}};
  ScalarField product(grid);
  for (std::size_t k = 0; k < grid.size(); ++k) product[k] = left.R[k] * right.R[k];
  result.overlap = integrate(product);
  if (result.overlap >= 1e-6) throw InvalidArgument("double-slit packets overlap initially");

  const ClassicalSystem system = ClassicalSystem::cartesian({"q"}, c.mass);
  const GridCoefficients coefficients = evaluate_coefficients(system, grid);
  const auto mags = dist.magnitudes(c.n_nodes);
  const auto nodes = dist.quadrature_nodes(c.n_nodes);
  const std::size_t steps = step_count(c.t_final, c.dt);
  const PropagationOptions options{c.t_final, c.dt, steps};
  std::vector<ComplexField> end_left(mags.size(), ComplexField(grid)), end_right(mags.size(), ComplexField(grid));
  kernels::parallel_for(mags.size(), [&](std::size_t i) {
    const DiscreteHamiltonian h = build_hamiltonian(coefficients, mags[i].lambda);
    end_left[i] = propagate(action_to_psi(left, mags[i].lambda), h, options).back().psi;
    end_right[i] = propagate(action_to_psi(right, mags[i].lambda), h, options).back().psi;
  });
  std::vector<ComplexField> p1, p2;
  for (const auto& n : nodes) {
    const std::size_t i = magnitude_index(mags, n.lambda);
    p1.push_back(end_left[i]);
    p2.push_back(end_right[i]);
  }
  const double amp = 1.0 / std::numbers::sqrt2;
  const Superposition sup = superposition_density(p1, p2, amp, amp, nodes);
  result.intensity = sup.normalized;
  result.normalization = sup.normalization;
  result.visibility = fringe_visibility(sup.normalized, c.central_half_width);
  for (const auto& m : mags) result.magnitudes.push_back(m.lambda);
  return result;
}

}  // namespace hvq
