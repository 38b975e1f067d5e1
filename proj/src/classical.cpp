#include "hvq/classical.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "hvq/kernels.hpp"

namespace hvq {

namespace {

constexpr std::size_t kMaxDims = 8;

std::size_t run_hamilton(const ClassicalSystem& system, double dt, std::size_t steps, std::size_t record_every,
                         std::size_t particles, std::span<double> q, std::span<double> p,
                         std::span<double> history) {
  kernels::HamiltonArgs args{&system, dt, steps, record_every, particles, q, p, history};
  return kernels::omp::integrate_hamilton(args);
}

double determinant(std::vector<double> m, std::size_t n) {
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(m[r * n + c]) > std::abs(m[piv * n + c])) piv = r;
    if (m[piv * n + c] == 0.0) return 0.0;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(m[c * n + k], m[piv * n + k]);
      det = -det;
    }
    det *= m[c * n + c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = m[r * n + c] / m[c * n + c];
      for (std::size_t k = c; k < n; ++k) m[r * n + k] -= f * m[c * n + k];
    }
  }
  return det;
}

// Node-based flow-map Jacobian signs; false if any cell's determinant is not
// positive.
bool flow_map_regular(const Grid& g, const std::vector<std::size_t>& lattice_index,
                      std::span<const double> x) {
  const std::size_t n = g.dims();
  std::vector<double> jac(n * n);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const std::size_t i0 = lattice_index[k];
    if (i0 == kernels::kNone) continue;
    bool complete = true;
    for (std::size_t b = 0; b < n && complete; ++b) {
      std::size_t nb;
      if (!g.neighbour(k, b, 1, nb) || lattice_index[nb] == kernels::kNone) {
        complete = false;
        break;
      }
      const std::size_t i1 = lattice_index[nb];
      for (std::size_t a = 0; a < n; ++a) {
        double d = x[i1 * n + a] - x[i0 * n + a];
        if (g.axis(a).boundary == Boundary::periodic) d = std::remainder(d, g.axis(a).length());
        jac[a * n + b] = d / g.spacing(b);
      }
    }
    if (complete && !(determinant(jac, n) > 0.0)) return false;
  }
  return true;
}

}  // namespace

ClassicalTrajectory integrate_hamilton(const ClassicalState& initial, const ClassicalSystem& system,
                                       double t_final, double dt, std::size_t record_every) {
  const std::size_t n = system.dims();
  if (initial.q.size() != n || initial.p.size() != n)
    throw InvalidArgument("state dimension does not match the system");
  const std::size_t steps = step_count(t_final, dt);
  const std::size_t every = std::max<std::size_t>(record_every, 1);
  std::vector<double> q = initial.q, p = initial.p;
  ClassicalTrajectory out{{0.0}, {initial}};
  std::size_t done = 0;
  while (done < steps) {
    const std::size_t chunk = std::min(every, steps - done);
    if (run_hamilton(system, dt, chunk, chunk, 1, q, p, {}) != kernels::kNone)
      throw NumericalError(fmt::format("trajectory became non-finite after step {}", done));
    done += chunk;
    out.times.push_back(done == steps ? t_final : static_cast<double>(done) * dt);
    out.states.push_back({q, p});
  }
  return out;
}

ScalarField deposit_density(const Grid& g, std::span<const double> x, std::size_t* escaped) {
  const std::size_t n = g.dims();
  const std::size_t particles = x.size() / n;
  ScalarField rho(g);
  std::size_t lost = 0;
  std::size_t lo[kMaxDims], hi[kMaxDims];
  double frac[kMaxDims];
  for (std::size_t p = 0; p < particles; ++p) {
    bool inside = true;
    for (std::size_t a = 0; a < n && inside; ++a) {
      const Axis& ax = g.axis(a);
      double s = (x[p * n + a] - ax.min) / ax.spacing();
      const auto pts = static_cast<long long>(ax.points);
      if (ax.boundary == Boundary::periodic) {
        s = std::fmod(s, static_cast<double>(pts));
        if (s < 0.0) s += static_cast<double>(pts);
        auto i = std::min(static_cast<long long>(std::floor(s)), pts - 1);
        frac[a] = s - static_cast<double>(i);
        lo[a] = static_cast<std::size_t>(i);
        hi[a] = static_cast<std::size_t>((i + 1) % pts);
      } else {
        if (s < 0.0 || s > static_cast<double>(pts - 1)) {
          inside = false;
          break;
        }
        auto i = std::min(static_cast<long long>(std::floor(s)), pts - 2);
        frac[a] = s - static_cast<double>(i);
        lo[a] = static_cast<std::size_t>(i);
        hi[a] = static_cast<std::size_t>(i + 1);
      }
    }
    if (!inside) {
      ++lost;
      continue;
    }
    for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
      double w = 1.0;
      std::size_t flat = 0;
      for (std::size_t a = 0; a < n; ++a) {
        const bool up = (corner >> a) & 1U;
        w *= up ? frac[a] : 1.0 - frac[a];
        flat += (up ? hi[a] : lo[a]) * g.stride(a);
      }
      rho[flat] += w;
    }
  }
  for (std::size_t k = 0; k < rho.size(); ++k)
    rho[k] /= static_cast<double>(particles) * g.quadrature_weight(k);
  if (escaped != nullptr) *escaped = lost;
  return rho;
}

ClassicalEnsembleRun evolve_classical_ensemble(const ScalarField& rho0, const ScalarField& s0,
                                               const ClassicalSystem& system,
                                               const PropagationOptions& options,
                                               std::size_t n_particles, std::uint64_t seed,
                                               Sampling mode) {
  const Grid& g = rho0.grid();
  require_same_grid(g, s0.grid(), "evolve_classical_ensemble");
  if (g.dims() != system.dims()) throw InvalidArgument("grid and system dimensions differ");
  if (std::abs(integrate(rho0) - 1.0) > 1e-6) throw InvalidArgument("rho0 must be normalized");
  const std::size_t n = g.dims();
  const std::size_t steps = step_count(options.t_final, options.dt);
  const std::size_t every = std::max<std::size_t>(options.snapshot_every, 1);

  ComplexField amplitude(g);
  double top = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (rho0[k] < 0.0) throw InvalidArgument(fmt::format("rho0 is negative at grid index {}", k));
    amplitude[k] = std::sqrt(rho0[k]);
    top = std::max(top, rho0[k]);
  }
  const TrajectoryEnsemble sampled = sample_particles(amplitude, n_particles, seed, mode);
  std::vector<ScalarField> grad_s;
  for (std::size_t a = 0; a < n; ++a) grad_s.push_back(gradient(s0, a));

  // Lattice characteristics from the support of rho0.
  std::vector<std::size_t> lattice_index(g.size(), kernels::kNone);
  std::size_t lattice = 0;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (rho0[k] > 1e-8 * top) lattice_index[k] = lattice++;

  const std::size_t total = n_particles + lattice;
  std::vector<double> q(total * n), p(total * n);
  std::copy(sampled.positions.begin(), sampled.positions.end(), q.begin());
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (lattice_index[k] == kernels::kNone) continue;
    const std::size_t i = n_particles + lattice_index[k];
    g.coordinates(k, std::span<double>(q).subspan(i * n, n));
  }
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t a = 0; a < n; ++a)
      p[i * n + a] = interpolate(grad_s[a], std::span<const double>(q).subspan(i * n, n));

  ClassicalEnsembleRun run;
  auto snapshot = [&](double t) {
    run.times.push_back(t);
    const std::span<const double> particles(q.data(), n_particles * n);
    run.positions.emplace_back(particles.begin(), particles.end());
    std::size_t lost = 0;
    run.densities.push_back(deposit_density(g, particles, &lost));
    run.escaped.push_back(lost);
    if (!run.post_caustic &&
        !flow_map_regular(g, lattice_index, std::span<const double>(q).subspan(n_particles * n))) {
      run.post_caustic = true;
      run.caustic_time = t;
    }
  };
  snapshot(0.0);
  std::size_t done = 0;
  while (done < steps) {
    const std::size_t chunk = std::min(every, steps - done);
    const std::size_t bad = run_hamilton(system, options.dt, chunk, chunk, total, q, p, {});
    if (bad != kernels::kNone) throw NumericalError(fmt::format("characteristic {} became non-finite", bad));
    done += chunk;
    snapshot(done == steps ? options.t_final : static_cast<double>(done) * options.dt);
  }
  return run;
}

std::vector<ComparisonPoint> classical_limit_compare(const std::vector<Frame>& quantum,
                                                     const ClassicalEnsembleRun& classical) {
  if (quantum.size() != classical.times.size()) throw InvalidArgument("runs have different snapshot counts");
  std::vector<ComparisonPoint> out;
  for (std::size_t s = 0; s < quantum.size(); ++s) {
    const Frame& f = quantum[s];
    if (std::abs(f.time - classical.times[s]) > 1e-9 * std::max(1.0, std::abs(f.time)))
      throw InvalidArgument(fmt::format("snapshot {} times differ ({} vs {})", s, f.time, classical.times[s]));
    const Grid& g = f.psi.grid();
    require_same_grid(g, classical.densities[s].grid(), "classical_limit_compare");
    const std::size_t n = g.dims();
    ComparisonPoint c{f.time, 0.0, 0.0, 0.0};
    const ScalarField rho = density(f.psi);
    ScalarField diff(g);
    for (std::size_t k = 0; k < g.size(); ++k) diff[k] = std::abs(rho[k] - classical.densities[s][k]);
    c.l1 = integrate(diff);
    const double mass = integrate(rho);
    const auto& x = classical.positions[s];
    const std::size_t np = x.size() / n;
    for (std::size_t a = 0; a < n; ++a) {
      ScalarField m1(g), m2(g);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double q = g.coordinate(k, a);
        m1[k] = q * rho[k];
        m2[k] = q * q * rho[k];
      }
      const double qm = integrate(m1) / mass;
      const double qv = integrate(m2) / mass - qm * qm;
      double cm = 0.0;
      for (std::size_t p = 0; p < np; ++p) cm += x[p * n + a];
      cm /= static_cast<double>(np);
      double cv = 0.0;
      for (std::size_t p = 0; p < np; ++p) cv += (x[p * n + a] - cm) * (x[p * n + a] - cm);
      cv /= static_cast<double>(np);
      c.mean_gap = std::max(c.mean_gap, std::abs(qm - cm));
      c.variance_gap = std::max(c.variance_gap, std::abs(qv - cv));
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace hvq
