#include "hvq/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace hvq {

namespace {

std::vector<std::uint8_t> margin_mask(const Grid& g, std::size_t margin) {
  std::vector<std::uint8_t> mask(g.size(), 1);
  for (std::size_t k = 0; k < g.size(); ++k)
    for (std::size_t a = 0; a < g.dims(); ++a) {
      const Axis& ax = g.axis(a);
      if (ax.boundary == Boundary::periodic) continue;
      const std::size_t i = g.index_along(k, a);
      if (i < margin || i + margin >= ax.points) mask[k] = 0;
    }
  return mask;
}

void finish(ResidualReport& r) {
  r.max_residual = 0.0;
  for (std::size_t c = 0; c < r.fields.size(); ++c)
    for (std::size_t k = 0; k < r.mask.size(); ++k) {
      if (!r.mask[k]) continue;
      const double v = std::abs(r.fields[c][k]);
      if (v > r.max_residual || !std::isfinite(v)) {
        r.max_residual = std::isfinite(v) ? v : INFINITY;
        r.argmax = k;
        r.component = c;
        if (!std::isfinite(v)) return;
      }
    }
}

struct Snapshot {
  PolarPair polar;
  std::vector<ScalarField> ds;  // d_j S
};

Snapshot analyse(const ComplexField& psi, double lambda_abs) {
  Snapshot s{to_polar(psi, lambda_abs), {}};
  for (std::size_t j = 0; j < psi.grid().dims(); ++j) s.ds.push_back(phase_gradient(s.polar, j));
  return s;
}

void check_pair(const ComplexField& a, const ComplexField& b, double dt) {
  require_same_grid(a.grid(), b.grid(), "residual snapshots");
  if (!(dt > 0.0)) throw InvalidArgument("snapshot spacing dt must be positive");
}

ScalarField max_amplitude(const Snapshot& a, const Snapshot& b) {
  ScalarField r(a.polar.R.grid());
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = std::min(a.polar.R[k], b.polar.R[k]);
  return r;
}

}  // namespace

std::vector<std::uint8_t> residual_mask(const ScalarField& amplitude, const ResidualOptions& o) {
  const Grid& g = amplitude.grid();
  std::vector<std::uint8_t> mask = margin_mask(g, o.margin);
  double top = 0.0;
  for (auto v : amplitude.values()) top = std::max(top, v);
  const double floor = o.support_floor * top;
  std::vector<std::size_t> idx(g.dims()), nb(g.dims());
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (amplitude[k] > floor) continue;
    // mask the hypercube of radius `neighbourhood` around the low node
    g.unravel(k, idx);
    const auto r = static_cast<long long>(o.neighbourhood);
    const std::size_t side = 2 * o.neighbourhood + 1;
    std::size_t count = 1;
    for (std::size_t a = 0; a < g.dims(); ++a) count *= side;
    for (std::size_t c = 0; c < count; ++c) {
      std::size_t rem = c;
      bool inside = true;
      for (std::size_t a = 0; a < g.dims(); ++a) {
        const long long off = static_cast<long long>(rem % side) - r;
        rem /= side;
        const auto n = static_cast<long long>(g.axis(a).points);
        long long j = static_cast<long long>(idx[a]) + off;
        if (g.axis(a).boundary == Boundary::periodic) j = ((j % n) + n) % n;
        else if (j < 0 || j >= n) inside = false;
        nb[a] = static_cast<std::size_t>(std::max(j, 0LL));
      }
      if (inside) mask[g.ravel(nb)] = 0;
    }
  }
  return mask;
}

ResidualReport identity_check(const ScalarField& omega, std::size_t margin) {
  const Grid& g = omega.grid();
  for (std::size_t k = 0; k < g.size(); ++k)
    if (!(omega[k] > 0.0)) throw DomainError("identity check needs a positive field", k);
  ScalarField r(g);
  for (std::size_t k = 0; k < g.size(); ++k) r[k] = std::sqrt(omega[k]);
  const std::size_t n = g.dims();
  std::vector<ScalarField> d;
  for (std::size_t a = 0; a < n; ++a) d.push_back(gradient(omega, a));
  ResidualReport rep{{}, margin_mask(g, margin), 0.0, 0, 0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const ScalarField dd = second_derivative(omega, i, j);
      const ScalarField rr = second_derivative(r, i, j);
      ScalarField res(g);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double w = omega[k];
        const double lhs = 0.25 * d[i][k] * d[j][k] / (w * w);
        const double rhs = 0.5 * dd[k] / w - rr[k] / r[k];
        res[k] = lhs - rhs;
      }
      rep.fields.push_back(std::move(res));
    }
  finish(rep);
  return rep;
}

ResidualReport hjm_residual(const ComplexField& psi0, const ComplexField& psi1, double dt,
                            const ClassicalSystem& system, double lambda, const ResidualOptions& o) {
  check_pair(psi0, psi1, dt);
  const double lam = std::abs(lambda);
  const Grid& g = psi0.grid();
  const GridCoefficients c = evaluate_coefficients(system, g);
  const std::size_t n = g.dims();
  const Snapshot s0 = analyse(psi0, lam), s1 = analyse(psi1, lam);
  // d_i g^ij, summed over i, for each j
  std::vector<ScalarField> div_g(n, ScalarField(g));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      if (c.metric_zero[i * n + j]) continue;
      const ScalarField d = gradient(c.g(i, j), i);
      for (std::size_t k = 0; k < g.size(); ++k) div_g[j][k] += d[k];
    }

  auto spatial = [&](const Snapshot& s) {
    ScalarField out(g);
    const ScalarField& R = s.polar.R;
    std::vector<ScalarField> dr;
    for (std::size_t a = 0; a < n; ++a) dr.push_back(gradient(R, a));
    for (std::size_t k = 0; k < g.size(); ++k) out[k] = c.scalar_potential[k];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (c.metric_zero[i * n + j]) continue;
        const ScalarField rij = second_derivative(R, i, j);
        const ScalarField& gij = c.g(i, j);
        for (std::size_t k = 0; k < g.size(); ++k) {
          const double kinetic = 0.5 * gij[k] * (s.ds[i][k] - c.vector_potential[i][k]) *
                                 (s.ds[j][k] - c.vector_potential[j][k]);
          out[k] += kinetic - 0.5 * lam * lam * gij[k] * rij[k] / R[k];
        }
      }
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < g.size(); ++k) out[k] -= 0.5 * lam * lam * div_g[j][k] * dr[j][k] / R[k];
    return out;
  };
  const ScalarField a0 = spatial(s0), a1 = spatial(s1);
  ScalarField res(g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double dphase = std::arg(psi1[k] * std::conj(psi0[k]));
    res[k] = lam * dphase / dt + 0.5 * (a0[k] + a1[k]);
  }
  ResidualReport rep{{std::move(res)}, residual_mask(max_amplitude(s0, s1), o), 0.0, 0, 0};
  finish(rep);
  return rep;
}

ResidualReport continuity_residual(const ComplexField& psi0, const ComplexField& psi1, double dt,
                                   const ClassicalSystem& system, double lambda, const ResidualOptions& o) {
  check_pair(psi0, psi1, dt);
  const double lam = std::abs(lambda);
  const Grid& g = psi0.grid();
  const GridCoefficients c = evaluate_coefficients(system, g);
  const std::size_t n = g.dims();
  const Snapshot s0 = analyse(psi0, lam), s1 = analyse(psi1, lam);

  auto divergence = [&](const Snapshot& s) {
    ScalarField out(g);
    for (std::size_t i = 0; i < n; ++i) {
      ScalarField flux(g);
      for (std::size_t k = 0; k < g.size(); ++k) {
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j) v += c.g(i, j)[k] * (s.ds[j][k] - c.vector_potential[j][k]);
        flux[k] = v * s.polar.R[k] * s.polar.R[k];
      }
      const ScalarField d = gradient(flux, i);
      for (std::size_t k = 0; k < g.size(); ++k) out[k] += d[k];
    }
    return out;
  };
  const ScalarField d0 = divergence(s0), d1 = divergence(s1);
  ScalarField res(g);
  for (std::size_t k = 0; k < g.size(); ++k)
    res[k] = (std::norm(psi1[k]) - std::norm(psi0[k])) / dt + 0.5 * (d0[k] + d1[k]);
  ResidualReport rep{{std::move(res)}, residual_mask(max_amplitude(s0, s1), o), 0.0, 0, 0};
  finish(rep);
  return rep;
}

SymmetryCheck sign_symmetry_check(const std::vector<Frame>& positive, const std::vector<Frame>& negative) {
  SymmetryCheck out;
  if (positive.empty() || negative.empty()) throw InvalidArgument("symmetry check needs two non-empty runs");
  out.premise_violated = !(positive.front().psi == negative.front().psi);
  const std::size_t n = std::min(positive.size(), negative.size());
  out.symmetric = positive.size() == negative.size();
  out.first_mismatch = n;
  for (std::size_t f = 0; f < n; ++f)
    if (positive[f].time != negative[f].time || !(positive[f].psi == negative[f].psi)) {
      out.symmetric = false;
      out.first_mismatch = f;
      break;
    }
  if (out.premise_violated) out.symmetric = false;
  return out;
}

}  // namespace hvq
