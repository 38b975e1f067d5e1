#include "hvq/fields.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

#include <fmt/format.h>

namespace hvq {

namespace {

double wrap_phase(double d) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  d = std::remainder(d, two_pi);  // in [-pi, pi]
  return d;
}

template <class T>
T cubic_sample(std::span<const T> v, const Axis& axis, double x) {
  const double s = (x - axis.min) / axis.spacing();
  const double fl = std::floor(s);
  const double u = s - fl;
  const auto n = static_cast<long long>(axis.points);
  const auto i = static_cast<long long>(fl);
  auto at = [&](long long k) -> T {
    if (axis.boundary == Boundary::periodic) {
      k %= n;
      if (k < 0) k += n;
      return v[static_cast<std::size_t>(k)];
    }
    if (k < 0 || k >= n) return T{};
    return v[static_cast<std::size_t>(k)];
  };
  if (u == 0.0) return at(i);
  const double wm = -u * (u - 1.0) * (u - 2.0) / 6.0;
  const double w0 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
  const double w1 = -(u + 1.0) * u * (u - 2.0) / 2.0;
  const double w2 = (u + 1.0) * u * (u - 1.0) / 6.0;
  return wm * at(i - 1) + w0 * at(i) + w1 * at(i + 1) + w2 * at(i + 2);
}

}  // namespace

Grid::Grid(std::vector<Axis> axes, std::size_t max_nodes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw InvalidArgument("grid needs at least one axis");
  strides_.assign(axes_.size(), 1);
  std::size_t total = 1;
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const Axis& ax = axes_[a];
    if (ax.points < 3) throw InvalidArgument(fmt::format("axis {} needs at least 3 points", a));
    if (!std::isfinite(ax.min) || !std::isfinite(ax.max) || !(ax.max > ax.min))
      throw InvalidArgument(fmt::format("axis {} needs finite min < max", a));
    if (total > max_nodes / ax.points)
      throw InvalidArgument(fmt::format("grid exceeds the node budget of {}", max_nodes));
    total *= ax.points;
  }
  for (std::size_t a = axes_.size() - 1; a > 0; --a) strides_[a - 1] = strides_[a] * axes_[a].points;
  size_ = total;
}

Grid Grid::line(double min, double max, std::size_t points, Boundary boundary) {
  return Grid({Axis{min, max, points, boundary}});
}

void Grid::unravel(std::size_t flat, std::span<std::size_t> idx) const noexcept {
  for (std::size_t a = 0; a < axes_.size(); ++a) idx[a] = (flat / strides_[a]) % axes_[a].points;
}

std::size_t Grid::ravel(std::span<const std::size_t> idx) const noexcept {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < axes_.size(); ++a) flat += idx[a] * strides_[a];
  return flat;
}

void Grid::coordinates(std::size_t flat, std::span<double> out) const noexcept {
  for (std::size_t a = 0; a < axes_.size(); ++a) out[a] = coordinate(flat, a);
}

bool Grid::neighbour(std::size_t flat, std::size_t a, int step, std::size_t& out) const noexcept {
  const std::size_t n = axes_[a].points;
  const auto i = static_cast<long long>(index_along(flat, a));
  long long j = i + step;
  if (axes_[a].boundary == Boundary::periodic) {
    j %= static_cast<long long>(n);
    if (j < 0) j += static_cast<long long>(n);
  } else if (j < 0 || j >= static_cast<long long>(n)) {
    return false;
  }
  out = flat - static_cast<std::size_t>(i) * strides_[a] + static_cast<std::size_t>(j) * strides_[a];
  return true;
}

bool Grid::on_box_boundary(std::size_t flat) const noexcept {
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    if (axes_[a].boundary != Boundary::box) continue;
    const std::size_t i = index_along(flat, a);
    if (i == 0 || i + 1 == axes_[a].points) return true;
  }
  return false;
}

double Grid::quadrature_weight(std::size_t flat) const noexcept {
  double w = 1.0;
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    double wa = axes_[a].spacing();
    if (axes_[a].boundary == Boundary::box) {
      const std::size_t i = index_along(flat, a);
      if (i == 0 || i + 1 == axes_[a].points) wa *= 0.5;
    }
    w *= wa;
  }
  return w;
}

double Grid::cell_volume() const noexcept {
  double v = 1.0;
  for (const auto& ax : axes_) v *= ax.spacing();
  return v;
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) throw InvalidArgument(fmt::format("{}: fields live on different grids", what));
}

double integrate(const ScalarField& f) {
  const Grid& g = f.grid();
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += g.quadrature_weight(i) * f[i];
  return sum;
}

double norm_squared(const ComplexField& psi) {
  const Grid& g = psi.grid();
  double sum = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) sum += g.quadrature_weight(i) * std::norm(psi[i]);
  return sum;
}

ScalarField density(const ComplexField& psi) {
  ScalarField rho(psi.grid());
  for (std::size_t i = 0; i < psi.size(); ++i) rho[i] = std::norm(psi[i]);
  return rho;
}

ComplexField normalize(const ComplexField& psi) {
  const double n2 = norm_squared(psi);
  if (!(n2 > 0.0) || !std::isfinite(n2))
    throw InvalidArgument("cannot normalize a field with zero or non-finite norm");
  const double scale = 1.0 / std::sqrt(n2);
  ComplexField out = psi;
  for (auto& v : out.values()) v *= scale;
  return out;
}

ScalarField gradient(const ScalarField& f, std::size_t axis) {
  const Grid& g = f.grid();
  if (axis >= g.dims()) throw InvalidArgument(fmt::format("axis {} out of range", axis));
  const Axis& ax = g.axis(axis);
  const double h = ax.spacing();
  const std::size_t n = ax.points;
  const std::size_t s = g.stride(axis);
  ScalarField out(g);
  for (std::size_t k = 0; k < f.size(); ++k) {
    const std::size_t i = g.index_along(k, axis);
    if (ax.boundary == Boundary::periodic) {
      const std::size_t up = i + 1 == n ? k - i * s : k + s;
      const std::size_t dn = i == 0 ? k + (n - 1) * s : k - s;
      out[k] = (f[up] - f[dn]) / (2.0 * h);
    } else if (i == 0) {
      out[k] = (-3.0 * f[k] + 4.0 * f[k + s] - f[k + 2 * s]) / (2.0 * h);
    } else if (i + 1 == n) {
      out[k] = (3.0 * f[k] - 4.0 * f[k - s] + f[k - 2 * s]) / (2.0 * h);
    } else {
      out[k] = (f[k + s] - f[k - s]) / (2.0 * h);
    }
  }
  return out;
}

ScalarField second_derivative(const ScalarField& f, std::size_t axis_i, std::size_t axis_j) {
  const Grid& g = f.grid();
  if (axis_i >= g.dims() || axis_j >= g.dims())
    throw InvalidArgument("second_derivative: axis out of range");
  if (axis_i != axis_j) return gradient(gradient(f, axis_j), axis_i);
  const Axis& ax = g.axis(axis_i);
  const double h2 = ax.spacing() * ax.spacing();
  const std::size_t n = ax.points;
  const std::size_t s = g.stride(axis_i);
  ScalarField out(g);
  for (std::size_t k = 0; k < f.size(); ++k) {
    const std::size_t i = g.index_along(k, axis_i);
    if (ax.boundary == Boundary::periodic) {
      const std::size_t up = i + 1 == n ? k - i * s : k + s;
      const std::size_t dn = i == 0 ? k + (n - 1) * s : k - s;
      out[k] = (f[up] - 2.0 * f[k] + f[dn]) / h2;
    } else if (i == 0) {
      out[k] = n >= 4 ? (2.0 * f[k] - 5.0 * f[k + s] + 4.0 * f[k + 2 * s] - f[k + 3 * s]) / h2
                      : (f[k] - 2.0 * f[k + s] + f[k + 2 * s]) / h2;
    } else if (i + 1 == n) {
      out[k] = n >= 4 ? (2.0 * f[k] - 5.0 * f[k - s] + 4.0 * f[k - 2 * s] - f[k - 3 * s]) / h2
                      : (f[k] - 2.0 * f[k - s] + f[k - 2 * s]) / h2;
    } else {
      out[k] = (f[k + s] - 2.0 * f[k] + f[k - s]) / h2;
    }
  }
  return out;
}

PolarPair to_polar(const ComplexField& psi, double lambda_abs) {
  if (!(lambda_abs > 0.0) || !std::isfinite(lambda_abs))
    throw InvalidArgument("to_polar: |lambda| must be positive");
  const Grid& g = psi.grid();
  const std::size_t size = psi.size();
  const std::size_t dims = g.dims();

  PolarPair pair{ScalarField(g), ScalarField(g), lambda_abs, std::vector<std::uint8_t>(size, 0)};
  double max_r = 0.0;
  for (std::size_t k = 0; k < size; ++k) {
    pair.R[k] = std::abs(psi[k]);
    max_r = std::max(max_r, pair.R[k]);
  }
  const double floor = kNodeFloor * max_r;

  // Raw phase; nodes under the floor borrow it from the nearest valid node.
  std::vector<double> theta(size, 0.0);
  std::vector<std::size_t> source(size, std::numeric_limits<std::size_t>::max());
  std::deque<std::size_t> queue;
  for (std::size_t k = 0; k < size; ++k) {
    if (pair.R[k] > floor && max_r > 0.0) {
      pair.valid[k] = 1;
      theta[k] = std::arg(psi[k]);
      source[k] = k;
      queue.push_back(k);
    }
  }
  while (!queue.empty()) {
    const std::size_t k = queue.front();
    queue.pop_front();
    for (std::size_t a = 0; a < dims; ++a) {
      for (int step : {-1, 1}) {
        std::size_t nb;
        if (!g.neighbour(k, a, step, nb)) continue;
        if (source[nb] != std::numeric_limits<std::size_t>::max()) continue;
        source[nb] = source[k];
        theta[nb] = theta[source[k]];
        queue.push_back(nb);
      }
    }
  }

  // Elementary loops must be free of phase winding.
  for (std::size_t a = 0; a < dims; ++a) {
    for (std::size_t b = a + 1; b < dims; ++b) {
      for (std::size_t k = 0; k < size; ++k) {
        std::size_t ka, kb, kab;
        if (!g.neighbour(k, a, 1, ka) || !g.neighbour(k, b, 1, kb) || !g.neighbour(ka, b, 1, kab))
          continue;
        if (!(pair.valid[k] && pair.valid[ka] && pair.valid[kb] && pair.valid[kab])) continue;
        const double residue = wrap_phase(theta[ka] - theta[k]) + wrap_phase(theta[kab] - theta[ka]) +
                               wrap_phase(theta[kb] - theta[kab]) + wrap_phase(theta[k] - theta[kb]);
        if (std::abs(residue) > 0.5 * std::numbers::pi)
          throw UnwrapError("phase vortex detected", k);
      }
    }
  }

  // Sweep axis by axis from the grid origin.
  std::vector<double> unwrapped(size, 0.0);
  unwrapped[0] = theta[0];
  std::vector<std::size_t> idx(dims);
  for (std::size_t a = 0; a < dims; ++a) {
    const std::size_t n = g.axis(a).points;
    const std::size_t s = g.stride(a);
    for (std::size_t k = 0; k < size; ++k) {
      g.unravel(k, idx);
      bool start = idx[a] == 0;
      for (std::size_t b = a + 1; b < dims && start; ++b) start = idx[b] == 0;
      if (!start) continue;
      for (std::size_t i = 1; i < n; ++i) {
        const std::size_t cur = k + i * s;
        const std::size_t prev = cur - s;
        unwrapped[cur] = unwrapped[prev] + wrap_phase(theta[cur] - theta[prev]);
      }
    }
  }
  for (std::size_t k = 0; k < size; ++k) pair.S[k] = lambda_abs * unwrapped[k];
  return pair;
}

ComplexField from_polar(const PolarPair& pair) {
  require_same_grid(pair.R.grid(), pair.S.grid(), "from_polar");
  ComplexField psi(pair.R.grid());
  for (std::size_t k = 0; k < psi.size(); ++k)
    psi[k] = std::polar(pair.R[k], pair.S[k] / pair.lambda_abs);
  return psi;
}

ScalarField phase_gradient(const PolarPair& pair, std::size_t axis) {
  const Grid& g = pair.S.grid();
  if (axis >= g.dims()) throw InvalidArgument("phase_gradient: axis out of range");
  const Axis& ax = g.axis(axis);
  const std::size_t n = ax.points;
  const std::size_t s = g.stride(axis);
  const double h = ax.spacing();
  const double lam = pair.lambda_abs;
  auto d = [&](std::size_t to, std::size_t from) { return wrap_phase((pair.S[to] - pair.S[from]) / lam); };
  ScalarField out(g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const std::size_t i = g.index_along(k, axis);
    double v;
    if (ax.boundary == Boundary::periodic) {
      std::size_t up, dn;
      g.neighbour(k, axis, 1, up);
      g.neighbour(k, axis, -1, dn);
      v = (d(up, k) + d(k, dn)) / (2.0 * h);
    } else if (i == 0) {
      v = (3.0 * d(k + s, k) - d(k + 2 * s, k + s)) / (2.0 * h);
    } else if (i + 1 == n) {
      v = (3.0 * d(k, k - s) - d(k - s, k - 2 * s)) / (2.0 * h);
    } else {
      v = (d(k + s, k) + d(k, k - s)) / (2.0 * h);
    }
    out[k] = lam * v;
  }
  return out;
}

double interpolate(const ScalarField& f, std::span<const double> point) {
  const Grid& g = f.grid();
  const std::size_t dims = g.dims();
  constexpr std::size_t kMaxDims = 8;
  if (dims > kMaxDims) throw InvalidArgument("interpolate supports at most 8 dimensions");
  std::size_t lo[kMaxDims], hi[kMaxDims];
  double frac[kMaxDims];
  for (std::size_t a = 0; a < dims; ++a) {
    const Axis& ax = g.axis(a);
    const double h = ax.spacing();
    const auto n = static_cast<long long>(ax.points);
    double s = (point[a] - ax.min) / h;
    if (ax.boundary == Boundary::periodic) {
      s = std::fmod(s, static_cast<double>(n));
      if (s < 0.0) s += static_cast<double>(n);
      auto i = static_cast<long long>(std::floor(s));
      if (i >= n) i = n - 1;
      frac[a] = s - static_cast<double>(i);
      lo[a] = static_cast<std::size_t>(i);
      hi[a] = static_cast<std::size_t>((i + 1) % n);
    } else {
      s = std::clamp(s, 0.0, static_cast<double>(n - 1));
      auto i = std::min(static_cast<long long>(std::floor(s)), n - 2);
      frac[a] = s - static_cast<double>(i);
      lo[a] = static_cast<std::size_t>(i);
      hi[a] = static_cast<std::size_t>(i + 1);
    }
  }
  double sum = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << dims); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (std::size_t a = 0; a < dims; ++a) {
      const bool up = (corner >> a) & 1U;
      w *= up ? frac[a] : 1.0 - frac[a];
      flat += (up ? hi[a] : lo[a]) * g.stride(a);
    }
    if (w != 0.0) sum += w * f[flat];
  }
  return sum;
}

double interpolate_cubic_1d(const ScalarField& f, double x) {
  if (f.grid().dims() != 1) throw InvalidArgument("interpolate_cubic_1d needs a 1D field");
  return cubic_sample<double>(f.values(), f.grid().axis(0), x);
}

complex interpolate_cubic_1d(const ComplexField& f, double x) {
  if (f.grid().dims() != 1) throw InvalidArgument("interpolate_cubic_1d needs a 1D field");
  return cubic_sample<complex>(f.values(), f.grid().axis(0), x);
}

}  // namespace hvq
