#include "hvq/trajectories.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "hvq/io.hpp"

namespace hvq {

namespace {

constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();

// Copies values from the nearest valid node into every invalid one.
void fill_from_nearest(const Grid& g, const std::vector<std::uint8_t>& valid,
                       std::vector<ScalarField>& fields) {
  std::vector<std::size_t> source(g.size(), kUnset);
  std::deque<std::size_t> queue;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (valid[k]) {
      source[k] = k;
      queue.push_back(k);
    }
  if (queue.empty()) return;
  while (!queue.empty()) {
    const std::size_t k = queue.front();
    queue.pop_front();
    for (std::size_t a = 0; a < g.dims(); ++a)
      for (int step : {-1, 1}) {
        std::size_t nb;
        if (!g.neighbour(k, a, step, nb) || source[nb] != kUnset) continue;
        source[nb] = source[k];
        for (auto& f : fields) f[nb] = f[source[k]];
        queue.push_back(nb);
      }
  }
}

// Cell index along each axis for a point; box axes clamp to the last cell.
std::size_t cell_of(const Grid& g, std::span<const double> x, std::size_t coarsen,
                    std::span<const std::size_t> bins) {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < g.dims(); ++a) {
    const Axis& ax = g.axis(a);
    const double s = (x[a] - ax.min) / ax.spacing();
    auto c = static_cast<long long>(std::floor(s));
    const auto cells = static_cast<long long>(ax.cells());
    if (ax.boundary == Boundary::periodic) {
      c %= cells;
      if (c < 0) c += cells;
    } else {
      c = std::clamp(c, 0LL, cells - 1);
    }
    const std::size_t b = std::min(static_cast<std::size_t>(c) / coarsen, bins[a] - 1);
    flat = flat * bins[a] + b;
  }
  return flat;
}

std::vector<std::size_t> bin_counts(const Grid& g, std::size_t coarsen) {
  if (coarsen == 0) throw InvalidArgument("coarsen must be at least 1");
  std::vector<std::size_t> bins;
  for (const auto& ax : g.axes()) bins.push_back((ax.cells() + coarsen - 1) / coarsen);
  return bins;
}

// Fine cells in row-major order with their trapezoidal mass.
std::vector<double> fine_cell_masses(const ComplexField& psi) {
  const Grid& g = psi.grid();
  const std::size_t dims = g.dims();
  std::vector<std::size_t> cells;
  std::size_t total = 1;
  for (const auto& ax : g.axes()) {
    cells.push_back(ax.cells());
    total *= ax.cells();
  }
  std::vector<double> mass(total, 0.0);
  std::vector<std::size_t> idx(dims), node(dims);
  const double corners = static_cast<double>(std::size_t{1} << dims);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rem = c;
    for (std::size_t a = dims; a-- > 0;) {
      idx[a] = rem % cells[a];
      rem /= cells[a];
    }
    double sum = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << dims); ++corner) {
      for (std::size_t a = 0; a < dims; ++a)
        node[a] = (idx[a] + ((corner >> a) & 1U)) % g.axis(a).points;
      sum += std::norm(psi[g.ravel(node)]);
    }
    mass[c] = sum / corners;
  }
  return mass;
}

}  // namespace

VectorField effective_velocity(const ComplexField& psi, const ClassicalSystem& system, double lambda_abs) {
  return effective_velocity(psi, evaluate_coefficients(system, psi.grid()), lambda_abs);
}

VectorField effective_velocity(const ComplexField& psi, const GridCoefficients& c, double lambda_abs) {
  const Grid& g = psi.grid();
  require_same_grid(g, c.grid, "effective_velocity");
  const PolarPair pair = to_polar(psi, lambda_abs);
  const std::size_t n = g.dims();
  std::vector<ScalarField> ds;
  for (std::size_t j = 0; j < n; ++j) ds.push_back(phase_gradient(pair, j));
  std::vector<ScalarField> v(n, ScalarField(g));
  for (std::size_t k = 0; k < g.size(); ++k)
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += c.g(i, j)[k] * (ds[j][k] - c.vector_potential[j][k]);
      v[i][k] = s;
    }
  fill_from_nearest(g, pair.valid, v);
  return VectorField{std::move(v)};
}

std::vector<kernels::VelocityFrame> velocity_frames(const std::vector<Frame>& frames,
                                                    const GridCoefficients& coefficients,
                                                    double lambda_abs) {
  std::vector<kernels::VelocityFrame> out(frames.size());
  kernels::parallel_for(frames.size(), [&](std::size_t i) {
    out[i] = {frames[i].time, effective_velocity(frames[i].psi, coefficients, lambda_abs)};
  });
  return out;
}

TrajectoryEnsemble sample_particles(const ComplexField& psi, std::size_t n, std::uint64_t seed,
                                    Sampling mode, double time) {
  if (n == 0) throw InvalidArgument("need at least one particle");
  const Grid& g = psi.grid();
  const std::size_t dims = g.dims();
  const std::vector<double> mass = fine_cell_masses(psi);
  std::vector<double> cdf(mass.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < mass.size(); ++c) cdf[c] = (acc += mass[c]);
  if (!(acc > 0.0)) throw InvalidArgument("cannot sample particles from a zero field");

  std::vector<std::size_t> cells;
  for (const auto& ax : g.axes()) cells.push_back(ax.cells());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  TrajectoryEnsemble e{dims, n, std::vector<double>(n * dims), {time}, {}};
  for (std::size_t p = 0; p < n; ++p) {
    const double u = mode == Sampling::stratified ? (static_cast<double>(p) + uni(rng)) / static_cast<double>(n)
                                                  : uni(rng);
    const double target = u * acc;
    std::size_t c = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), target) - cdf.begin());
    c = std::min(c, mass.size() - 1);
    while (mass[c] == 0.0 && c > 0) --c;
    std::size_t rem = c;
    for (std::size_t a = dims; a-- > 0;) {
      const std::size_t i = rem % cells[a];
      rem /= cells[a];
      const Axis& ax = g.axis(a);
      e.positions[p * dims + a] = ax.min + (static_cast<double>(i) + uni(rng)) * ax.spacing();
    }
  }
  e.history.push_back(e.positions);
  return e;
}

TrajectoryEnsemble advect(const TrajectoryEnsemble& ensemble,
                          std::span<const kernels::VelocityFrame> frames, std::size_t substeps) {
  if (frames.empty()) throw InvalidArgument("advect needs at least one velocity frame");
  if (substeps == 0) throw InvalidArgument("substeps must be at least 1");
  if (frames.front().velocity.dims() != ensemble.dims)
    throw InvalidArgument("velocity frames and ensemble have different dimensions");
  for (std::size_t k = 1; k < frames.size(); ++k)
    if (!(frames[k].time > frames[k - 1].time)) throw InvalidArgument("velocity frames must increase in time");
  TrajectoryEnsemble out = ensemble;
  std::vector<double> history(frames.size() * ensemble.particles * ensemble.dims);
  kernels::AdvectArgs args{frames, substeps, ensemble.particles, out.positions, history};
  const std::size_t bad = kernels::omp::advect_particles(args);
  if (bad != kernels::kNone) throw NumericalError(fmt::format("particle {} became non-finite", bad));
  out.times.clear();
  out.history.clear();
  const std::size_t block = ensemble.particles * ensemble.dims;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    out.times.push_back(frames[k].time);
    out.history.emplace_back(history.begin() + static_cast<std::ptrdiff_t>(k * block),
                             history.begin() + static_cast<std::ptrdiff_t>((k + 1) * block));
  }
  return out;
}

std::vector<double> cell_masses(const ComplexField& psi, std::size_t coarsen) {
  const Grid& g = psi.grid();
  const auto bins = bin_counts(g, coarsen);
  std::size_t total = 1;
  for (auto b : bins) total *= b;
  const std::vector<double> fine = fine_cell_masses(psi);
  std::vector<double> out(total, 0.0);
  std::vector<std::size_t> idx(g.dims());
  double sum = 0.0;
  for (std::size_t c = 0; c < fine.size(); ++c) {
    std::size_t rem = c;
    for (std::size_t a = g.dims(); a-- > 0;) {
      idx[a] = rem % g.axis(a).cells();
      rem /= g.axis(a).cells();
    }
    std::size_t flat = 0;
    for (std::size_t a = 0; a < g.dims(); ++a) flat = flat * bins[a] + std::min(idx[a] / coarsen, bins[a] - 1);
    out[flat] += fine[c];
    sum += fine[c];
  }
  if (!(sum > 0.0)) throw InvalidArgument("cell masses of a zero field");
  for (auto& m : out) m /= sum;
  return out;
}

std::vector<double> particle_histogram(const Grid& grid, std::span<const double> positions,
                                       std::size_t coarsen) {
  const auto bins = bin_counts(grid, coarsen);
  std::size_t total = 1;
  for (auto b : bins) total *= b;
  const std::size_t dims = grid.dims();
  const std::size_t n = positions.size() / dims;
  std::vector<double> out(total, 0.0);
  for (std::size_t p = 0; p < n; ++p) out[cell_of(grid, positions.subspan(p * dims, dims), coarsen, bins)] += 1.0;
  for (auto& h : out) h /= static_cast<double>(n);
  return out;
}

double born_distance(std::span<const double> positions, const ComplexField& psi, std::size_t coarsen) {
  const std::size_t dims = psi.grid().dims();
  if (positions.size() % dims != 0) throw InvalidArgument("position array does not match the grid dimension");
  if (positions.size() / dims < 100) throw InvalidArgument("born_distance needs at least 100 particles");
  const auto masses = cell_masses(psi, coarsen);
  const auto hist = particle_histogram(psi.grid(), positions, coarsen);
  double d = 0.0;
  for (std::size_t c = 0; c < masses.size(); ++c) d += std::abs(hist[c] - masses[c]);
  return d;
}

double born_distance(const TrajectoryEnsemble& ensemble, const ComplexField& psi, std::size_t coarsen) {
  return born_distance(ensemble.positions, psi, coarsen);
}

void write_trajectories_csv(std::ostream& out, const TrajectoryEnsemble& e,
                            const std::vector<std::string>& names) {
  out << "time,particle";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t k = 0; k < e.history.size(); ++k)
    for (std::size_t p = 0; p < e.particles; ++p) {
      out << format_real(e.times[k]) << ',' << p;
      for (std::size_t a = 0; a < e.dims; ++a) out << ',' << format_real(e.history[k][p * e.dims + a]);
      out << '\n';
    }
}

}  // namespace hvq
