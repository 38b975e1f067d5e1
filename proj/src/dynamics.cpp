#include "hvq/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "hvq/kernels.hpp"

namespace hvq {

namespace {

using Triplet = Eigen::Triplet<complex, std::int64_t>;

constexpr std::size_t kInactive = static_cast<std::size_t>(-1);

struct Assembler {
  const GridCoefficients& c;
  double lambda;
  std::vector<std::size_t> index;  // flat -> active
  std::vector<Triplet> triplets;

  // Adds 1/2 * g * conj(u_a) v_b over the corner lists.
  template <std::size_t N>
  void add_form(const std::size_t (&nodes)[N], const complex (&u)[N], const complex (&v)[N], double g) {
    for (std::size_t a = 0; a < N; ++a) {
      const std::size_t ra = index[nodes[a]];
      if (ra == kInactive) continue;
      for (std::size_t b = 0; b < N; ++b) {
        const std::size_t rb = index[nodes[b]];
        if (rb == kInactive) continue;
        const complex value = 0.5 * g * std::conj(u[a]) * v[b];
        if (value != complex{})
          triplets.emplace_back(static_cast<std::int64_t>(ra), static_cast<std::int64_t>(rb), value);
      }
    }
  }
};

}  // namespace

DiscreteHamiltonian build_hamiltonian(const ClassicalSystem& system, const Grid& grid,
                                      double lambda_abs) {
  return build_hamiltonian(evaluate_coefficients(system, grid), lambda_abs);
}

DiscreteHamiltonian build_hamiltonian(const GridCoefficients& c, double lambda_abs) {
  if (!(lambda_abs > 0.0) || !std::isfinite(lambda_abs))
    throw InvalidArgument("|lambda| must be positive and finite");
  const Grid& grid = c.grid;
  const std::size_t n = grid.dims();
  const complex I(0.0, 1.0);

  DiscreteHamiltonian h{grid, lambda_abs, {}, {}};
  Assembler as{c, lambda_abs, std::vector<std::size_t>(grid.size(), kInactive), {}};
  for (std::size_t k = 0; k < grid.size(); ++k)
    if (!grid.on_box_boundary(k)) {
      as.index[k] = h.active.size();
      h.active.push_back(k);
    }
  if (h.active.empty()) throw InvalidArgument("grid has no interior nodes");

  for (std::size_t k = 0; k < grid.size(); ++k) {
    // same-axis terms on the face between k and k + e_a
    for (std::size_t a = 0; a < n; ++a) {
      std::size_t kp = 0;
      if (!grid.neighbour(k, a, 1, kp)) continue;
      const double ha = grid.spacing(a);
      const double g = 0.5 * (c.g(a, a)[k] + c.g(a, a)[kp]);
      const double af = 0.5 * (c.vector_potential[a][k] + c.vector_potential[a][kp]);
      const std::size_t nodes[2] = {k, kp};
      const complex u[2] = {I * lambda_abs / ha - 0.5 * af, -I * lambda_abs / ha - 0.5 * af};
      as.add_form(nodes, u, u, g);
    }
    // mixed terms on the plaquette spanned by axes i < j at corner k
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (c.metric_zero[i * n + j]) continue;
        std::size_t ki = 0, kj = 0, kij = 0;
        if (!grid.neighbour(k, i, 1, ki) || !grid.neighbour(k, j, 1, kj) ||
            !grid.neighbour(ki, j, 1, kij))
          continue;
        const std::size_t nodes[4] = {k, ki, kj, kij};
        const ScalarField& gij = c.g(i, j);
        const double g = 0.25 * (gij[k] + gij[ki] + gij[kj] + gij[kij]);
        if (g == 0.0) continue;
        auto centre = [&](const ScalarField& f) { return 0.25 * (f[k] + f[ki] + f[kj] + f[kij]); };
        const double ai = centre(c.vector_potential[i]);
        const double aj = centre(c.vector_potential[j]);
        const double di = lambda_abs / (2.0 * grid.spacing(i));
        const double dj = lambda_abs / (2.0 * grid.spacing(j));
        // -i lambda D - A M with D the cell-centred difference, M the 4-corner mean
        const complex ui[4] = {I * di - 0.25 * ai, -I * di - 0.25 * ai, I * di - 0.25 * ai,
                               -I * di - 0.25 * ai};
        const complex uj[4] = {I * dj - 0.25 * aj, I * dj - 0.25 * aj, -I * dj - 0.25 * aj,
                               -I * dj - 0.25 * aj};
        as.add_form(nodes, ui, uj, g);
        as.add_form(nodes, uj, ui, g);
      }
  }
  for (std::size_t r = 0; r < h.active.size(); ++r) {
    const double v = c.scalar_potential[h.active[r]];
    if (v != 0.0) as.triplets.emplace_back(static_cast<std::int64_t>(r), static_cast<std::int64_t>(r), v);
  }

  const auto dim = static_cast<std::int64_t>(h.active.size());
  SparseRowMatrix s(dim, dim);
  s.setFromTriplets(as.triplets.begin(), as.triplets.end());
  SparseRowMatrix sh = s.adjoint();
  h.matrix = 0.5 * (s + sh);
  h.matrix.makeCompressed();
  return h;
}

Eigen::VectorXcd DiscreteHamiltonian::gather(const ComplexField& psi) const {
  require_same_grid(psi.grid(), grid, "gather");
  Eigen::VectorXcd x(static_cast<Eigen::Index>(active.size()));
  for (std::size_t r = 0; r < active.size(); ++r) x[static_cast<Eigen::Index>(r)] = psi[active[r]];
  return x;
}

ComplexField DiscreteHamiltonian::scatter(const Eigen::VectorXcd& values) const {
  ComplexField psi(grid);
  for (std::size_t r = 0; r < active.size(); ++r) psi[active[r]] = values[static_cast<Eigen::Index>(r)];
  return psi;
}

Eigen::VectorXcd DiscreteHamiltonian::apply(const Eigen::VectorXcd& x) const {
  Eigen::VectorXcd y(x.size());
  const kernels::CsrView view{
      active.size(),
      {matrix.outerIndexPtr(), active.size() + 1},
      {matrix.innerIndexPtr(), static_cast<std::size_t>(matrix.nonZeros())},
      {matrix.valuePtr(), static_cast<std::size_t>(matrix.nonZeros())}};
  kernels::omp::csr_matvec(view, {x.data(), static_cast<std::size_t>(x.size())},
                           {y.data(), static_cast<std::size_t>(y.size())});
  return y;
}

ComplexField DiscreteHamiltonian::apply(const ComplexField& psi) const { return scatter(apply(gather(psi))); }

Eigen::MatrixXcd DiscreteHamiltonian::dense() const { return Eigen::MatrixXcd(matrix); }

double energy(const DiscreteHamiltonian& h, const ComplexField& psi) {
  const Eigen::VectorXcd x = h.gather(psi);
  return x.dot(h.apply(x)).real() * h.grid.cell_volume();
}

std::vector<double> lowest_eigenvalues(const DiscreteHamiltonian& h, std::size_t count) {
  if (h.dimension() > 6000) throw InvalidArgument("dense eigenvalue solve limited to 6000 nodes");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h.dense(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigenvalue solve failed");
  const auto& ev = solver.eigenvalues();
  std::vector<double> out;
  for (Eigen::Index i = 0; i < ev.size() && out.size() < count; ++i) out.push_back(ev[i]);
  return out;
}

CrankNicolson::CrankNicolson(const DiscreteHamiltonian& h, double dt)
    : h_(&h), dt_(dt), c_(dt / (2.0 * h.lambda_abs)) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
  const auto dim = static_cast<Eigen::Index>(h.dimension());
  Eigen::SparseMatrix<complex> id(dim, dim);
  id.setIdentity();
  a_ = id + complex(0.0, c_) * Eigen::SparseMatrix<complex>(h.matrix);
  a_.makeCompressed();
  lu_.analyzePattern(a_);
  lu_.factorize(a_);
  if (lu_.info() != Eigen::Success) throw NumericalError("Crank-Nicolson factorization failed");
}

double CrankNicolson::step(Eigen::VectorXcd& x) const {
  const complex ic(0.0, c_);
  const Eigen::VectorXcd rhs = x - ic * h_->apply(x);
  const double scale = rhs.norm();
  Eigen::VectorXcd y = lu_.solve(rhs);
  double residual = 0.0;
  for (int pass = 0;; ++pass) {
    const Eigen::VectorXcd r = rhs - (y + ic * h_->apply(y));
    residual = scale > 0.0 ? r.norm() / scale : r.norm();
    if (residual <= kResidualTolerance) break;
    if (pass == 3 || !std::isfinite(residual))
      throw NumericalError(fmt::format("linear solve did not converge (relative residual {:.3e})", residual));
    y += lu_.solve(r);
  }
  x = std::move(y);
  return residual;
}

ComplexField CrankNicolson::step(const ComplexField& psi) const {
  Eigen::VectorXcd x = h_->gather(psi);
  step(x);
  return h_->scatter(x);
}

ComplexField step_crank_nicolson(const ComplexField& psi, const DiscreteHamiltonian& h, double dt) {
  return CrankNicolson(h, dt).step(psi);
}

std::size_t step_count(double t_final, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
  if (!(t_final >= dt) || !std::isfinite(t_final)) throw InvalidArgument("t_final must be at least dt");
  const double ratio = t_final / dt;
  const double steps = std::round(ratio);
  if (std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio))
    throw InvalidArgument(fmt::format("dt = {} does not divide t_final = {}", dt, t_final));
  return static_cast<std::size_t>(steps);
}

std::vector<Frame> propagate(const ComplexField& psi0, const ClassicalSystem& system, double lambda,
                             const PropagationOptions& options) {
  const DiscreteHamiltonian h = build_hamiltonian(system, psi0.grid(), std::abs(lambda));
  return propagate(psi0, h, options);
}

std::vector<Frame> propagate(const ComplexField& psi0, const DiscreteHamiltonian& h,
                             const PropagationOptions& options) {
  const std::size_t steps = step_count(options.t_final, options.dt);
  const std::size_t every = std::max<std::size_t>(options.snapshot_every, 1);
  Eigen::VectorXcd x = h.gather(psi0);
  if (!x.allFinite()) throw InvalidArgument("initial wave function is not finite");
  std::vector<Frame> frames;
  frames.push_back({0.0, h.scatter(x)});
  std::optional<CrankNicolson> cn;
  try {
    cn.emplace(h, options.dt);
  } catch (const NumericalError& e) {
    throw PropagationAbort(fmt::format("step 1 (t = {}): {}", options.dt, e.what()), frames.back());
  }
  for (std::size_t s = 1; s <= steps; ++s) {
    const double t = s == steps ? options.t_final : static_cast<double>(s) * options.dt;
    try {
      cn->step(x);
    } catch (const NumericalError& e) {
      throw PropagationAbort(fmt::format("step {} (t = {}): {}", s, t, e.what()), frames.back());
    }
    if (!x.allFinite()) throw PropagationAbort(fmt::format("non-finite wave function at step {} (t = {})", s, t), frames.back());
    if (s % every == 0 || s == steps) frames.push_back({t, h.scatter(x)});
  }
  return frames;
}

}  // namespace hvq
