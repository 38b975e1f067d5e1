#include "hvq/measurement.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "hvq/dynamics.hpp"
#include "hvq/kernels.hpp"

namespace hvq {

double classical_pointer_shift(double a1, double coupling, double duration) {
  return coupling * a1 * duration;
}

void validate_setup(const MeasurementSetup& s) {
  if (s.components.empty()) throw InvalidArgument("measurement needs at least one eigen-component");
  if (!(s.duration > 0.0)) throw InvalidArgument("measurement duration must be positive");
  if (!std::isfinite(s.coupling)) throw InvalidArgument("coupling must be finite");
  double total = 0.0;
  for (const auto& c : s.components) total += std::norm(c.c);
  if (std::abs(total - 1.0) > 1e-12)
    throw InvalidArgument(fmt::format("eigen-coefficients have total weight {} (must be 1)", total));
  if (s.pointer0.grid().dims() != 1) throw InvalidArgument("pointer packet must be one-dimensional");
  if (std::abs(norm_squared(s.pointer0) - 1.0) > 1e-9) throw InvalidArgument("pointer packet must be normalized");
}

double pointer_shift(double l, double lambda, const MeasurementSetup& s) {
  return s.coupling * (std::abs(lambda) / s.dist.hbar()) * l * s.duration;
}

ComplexField eigenstate_pointer(double l, double lambda, const MeasurementSetup& s) {
  const ComplexField& phi = s.pointer0;
  const Grid& g = phi.grid();
  const Axis& ax = g.axis(0);
  const double h = ax.spacing();
  const double shift = pointer_shift(l, lambda, s);
  const auto n = static_cast<long long>(ax.points);

  if (ax.boundary == Boundary::box) {
    double lost = 0.0, total = 0.0;
    for (std::size_t k = 0; k < phi.size(); ++k) {
      const double m = std::norm(phi[k]) * g.quadrature_weight(k);
      total += m;
      const double x = ax.coordinate(k) + shift;
      if (x < ax.min - 1e-12 * h || x > ax.max + 1e-12 * h) lost += m;
    }
    if (lost > 1e-9 * total)
      throw InvalidArgument(fmt::format("pointer shift {} moves {:.3g} of the packet off the grid", shift, lost / total));
  }

  ComplexField out(g);
  const double nodes = shift / h;
  const double whole = std::round(nodes);
  if (std::abs(nodes - whole) <= 1e-9 * std::max(1.0, std::abs(nodes))) {
    const auto m = static_cast<long long>(whole);
    for (long long i = 0; i < n; ++i) {
      long long src = i - m;
      if (ax.boundary == Boundary::periodic) src = ((src % n) + n) % n;
      else if (src < 0 || src >= n) continue;
      out[static_cast<std::size_t>(i)] = phi[static_cast<std::size_t>(src)];
    }
  } else {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = interpolate_cubic_1d(phi, ax.coordinate(k) - shift);
  }
  return out;
}

std::vector<PointerPeak> find_peaks(const ScalarField& rho, double min_separation, double relative_threshold) {
  const Grid& g = rho.grid();
  const std::size_t n = rho.size();
  double top = 0.0;
  for (std::size_t k = 0; k < n; ++k) top = std::max(top, rho[k]);
  if (!(top > 0.0)) return {};
  // strict local maxima (plateaus count once, at their left end)
  std::vector<std::size_t> maxima;
  for (std::size_t k = 0; k < n; ++k) {
    const double left = k > 0 ? rho[k - 1] : -1.0;
    std::size_t r = k;
    while (r + 1 < n && rho[r + 1] == rho[k]) ++r;
    const double right = r + 1 < n ? rho[r + 1] : -1.0;
    if (rho[k] > left && rho[k] > right && rho[k] > relative_threshold * top) maxima.push_back(k);
    k = r;
  }
  // merge maxima closer than min_separation, keeping the higher one
  std::vector<std::size_t> order = maxima;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rho[a] > rho[b]; });
  std::vector<std::size_t> kept;
  for (auto m : order) {
    bool close = false;
    for (auto k : kept) close = close || std::abs(g.coordinate(m, 0) - g.coordinate(k, 0)) < min_separation;
    if (!close) kept.push_back(m);
  }
  std::sort(kept.begin(), kept.end());
  // basins are split at the lowest node between neighbouring peaks
  std::vector<std::size_t> cuts;
  for (std::size_t p = 0; p + 1 < kept.size(); ++p) {
    std::size_t best = kept[p];
    for (std::size_t k = kept[p]; k <= kept[p + 1]; ++k)
      if (rho[k] < rho[best]) best = k;
    cuts.push_back(best);
  }
  std::vector<PointerPeak> peaks;
  std::size_t begin = 0;
  for (std::size_t p = 0; p < kept.size(); ++p) {
    const std::size_t end = p < cuts.size() ? cuts[p] : n;  // exclusive
    double mass = 0.0;
    for (std::size_t k = begin; k < end; ++k) mass += rho[k] * g.quadrature_weight(k);
    peaks.push_back({g.coordinate(kept[p], 0), mass, 0.0});
    begin = end;
  }
  return peaks;
}

PointerStatistics pointer_distribution(const MeasurementSetup& s, std::size_t n_lambda_nodes,
                                       double min_separation) {
  validate_setup(s);
  const auto mags = s.dist.magnitudes(n_lambda_nodes);
  const Grid& g = s.pointer0.grid();
  const std::size_t nl = s.components.size(), nm = mags.size();

  std::vector<ScalarField> packets(nl * nm, ScalarField(g));
  kernels::parallel_for(nl * nm, [&](std::size_t i) {
    const ComplexField shifted = eigenstate_pointer(s.components[i / nm].l, mags[i % nm].lambda, s);
    ScalarField rho = density(shifted);
    const double mass = integrate(rho);
    for (auto& v : rho.values()) v /= mass;
    packets[i] = std::move(rho);
  });

  PointerStatistics out{ScalarField(g), 0.0, 0.0, {}, false};
  for (std::size_t l = 0; l < nl; ++l) {
    const double pl = std::norm(s.components[l].c);
    for (std::size_t m = 0; m < nm; ++m) {
      const double w = pl * mags[m].weight;
      const ScalarField& rho = packets[l * nm + m];
      for (std::size_t k = 0; k < rho.size(); ++k) out.pointer_density[k] += w * rho[k];
    }
  }
  // Moments of l' = |lambda| l / hbar under the untruncated law.
  const double hbar = s.dist.hbar();
  const double first = s.dist.abs_mean() / hbar, second = s.dist.second_moment() / (hbar * hbar);
  double l_mean = 0.0, l_square = 0.0;
  for (const auto& c : s.components) {
    l_mean += std::norm(c.c) * c.l;
    l_square += std::norm(c.c) * c.l * c.l;
  }
  out.inferred_mean = l_mean * first;
  out.inferred_variance = std::max(0.0, l_square * second - out.inferred_mean * out.inferred_mean);

  out.peaks = find_peaks(out.pointer_density, min_separation);
  const double gt = s.coupling * s.duration;
  for (auto& p : out.peaks) p.inferred = gt != 0.0 ? p.location / gt : 0.0;
  std::vector<double> distinct;
  for (const auto& c : s.components)
    if (std::norm(c.c) > 0.0 && std::find(distinct.begin(), distinct.end(), c.l) == distinct.end())
      distinct.push_back(c.l);
  out.ambiguous = out.peaks.size() != distinct.size();
  if (!out.ambiguous)
    for (std::size_t p = 0; p + 1 < out.peaks.size(); ++p) {
      // neighbouring basins must be separated by an (almost) empty gap
      double lo = INFINITY;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double q = g.coordinate(k, 0);
        if (q > out.peaks[p].location && q < out.peaks[p + 1].location) lo = std::min(lo, out.pointer_density[k]);
      }
      double top = 0.0;
      for (auto v : out.pointer_density.values()) top = std::max(top, v);
      if (lo > 1e-6 * top) out.ambiguous = true;
    }
  return out;
}

PositionMeasurementReport position_measurement_check(const ScalarField& rho0, const ScalarField& s0,
                                                     double coupling, double duration, double dt,
                                                     double hbar) {
  const Grid& g = rho0.grid();
  require_same_grid(g, s0.grid(), "position_measurement_check");
  if (g.dims() != 2) throw InvalidArgument("position measurement needs a 2D (q1, q2) grid");
  if (g.axis(1).boundary != Boundary::box) throw InvalidArgument("pointer axis q2 must be a box axis");
  if (!(hbar > 0.0)) throw InvalidArgument("hbar must be positive");
  const std::size_t steps = step_count(duration, dt);
  const std::size_t rows = g.axis(0).points, cols = g.axis(1).points;
  const double h2 = g.spacing(1);

  ComplexField psi(g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (rho0[k] < 0.0) throw InvalidArgument(fmt::format("rho0 is negative at grid index {}", k));
    psi[k] = std::polar(std::sqrt(rho0[k]), s0[k] / hbar);
  }
  PositionMeasurementReport r{ScalarField(g), ScalarField(g), 0.0, 0.0, false, 0.0, 0.0};
  std::vector<double> speeds(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    speeds[i] = coupling * g.axis(0).coordinate(i);
    r.cfl = std::max(r.cfl, std::abs(speeds[i]) * dt / h2);
  }
  r.cfl_exceeded = r.cfl > 1.0;

  for (std::size_t i = 0; i < rows; ++i) {  // Dirichlet ends of every row
    psi[i * cols] = 0.0;
    psi[i * cols + cols - 1] = 0.0;
  }
  const double norm0 = norm_squared(psi);
  kernels::TransportArgs args{rows, cols, speeds, h2, duration / static_cast<double>(steps), steps, psi.values()};
  r.solve_residual = kernels::omp::transport_rows(args);
  r.norm_drift = std::abs(norm_squared(psi) - norm0);

  const Grid line = Grid(std::vector<Axis>{g.axis(1)});
  for (std::size_t i = 0; i < rows; ++i) {
    ScalarField row(line);
    for (std::size_t j = 0; j < cols; ++j) row[j] = rho0[i * cols + j];
    const double shift = speeds[i] * duration;
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k = i * cols + j;
      r.quantum[k] = std::norm(psi[k]);
      if (j == 0 || j + 1 == cols) r.classical[k] = 0.0;
      else r.classical[k] = shift == 0.0 ? row[j] : interpolate_cubic_1d(row, g.axis(1).coordinate(j) - shift);
      r.max_difference = std::max(r.max_difference, std::abs(r.quantum[k] - r.classical[k]));
    }
  }
  return r;
}

}  // namespace hvq
