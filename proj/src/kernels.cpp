#include "hvq/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#include <omp.h>

#include "hvq/system.hpp"

namespace hvq::kernels {

namespace {

std::atomic<int> g_thread_limit{0};

int team_size() {
  const int limit = g_thread_limit.load(std::memory_order_relaxed);
  return limit > 0 ? limit : omp_get_max_threads();
}

constexpr std::size_t kMaxDims = 8;

// ---------------------------------------------------------------- per-element bodies

inline expr::EvalStatus eval_node(const expr::Program& program, const Grid& grid, double time,
                                  std::size_t k, double& out) {
  double coords[kMaxDims];
  const std::span<double> c(coords, grid.dims());
  grid.coordinates(k, c);
  return program.run(c, time, out);
}

inline void matvec_row(const CsrView& a, std::span<const complex> x, std::span<complex> y,
                       std::size_t r) {
  complex s{};
  for (auto e = a.row_begin[r]; e < a.row_begin[r + 1]; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    s += a.value[ue] * x[static_cast<std::size_t>(a.column[ue])];
  }
  y[r] = s;
}

// Folds a coordinate back into the domain: reflection on box axes, wrap on
// periodic ones.
inline double fold(double x, const Axis& axis) {
  const double lo = axis.min, hi = axis.max, len = hi - lo;
  if (axis.boundary == Boundary::periodic) {
    double y = std::fmod(x - lo, len);
    if (y < 0.0) y += len;
    if (y >= len) y = 0.0;
    return lo + y;
  }
  double y = std::fmod(x - lo, 2.0 * len);
  if (y < 0.0) y += 2.0 * len;
  if (y > len) y = 2.0 * len - y;
  return lo + y;
}

inline void frame_velocity(std::span<const VelocityFrame> frames, std::size_t k, double tau,
                           std::span<const double> x, std::span<double> v) {
  const VelocityFrame& f0 = frames[k];
  const VelocityFrame& f1 = frames[std::min(k + 1, frames.size() - 1)];
  const double span = f1.time - f0.time;
  const double w = span > 0.0 ? (tau - f0.time) / span : 0.0;
  for (std::size_t a = 0; a < v.size(); ++a) {
    const double v0 = interpolate(f0.velocity.components[a], x);
    const double v1 = w == 0.0 ? v0 : interpolate(f1.velocity.components[a], x);
    v[a] = (1.0 - w) * v0 + w * v1;
  }
}

inline bool advect_one(const AdvectArgs& args, std::size_t p) {
  const Grid& grid = args.frames.front().velocity.grid();
  const std::size_t n = grid.dims();
  const std::size_t np = args.particles;
  double x[kMaxDims], y[kMaxDims], k1[kMaxDims], k2[kMaxDims], k3[kMaxDims], k4[kMaxDims];
  const std::span<double> xs(x, n), ys(y, n);
  std::copy_n(args.positions.begin() + static_cast<std::ptrdiff_t>(p * n), n, x);
  auto record = [&](std::size_t frame) {
    if (args.history.empty()) return;
    std::copy_n(x, n, args.history.begin() + static_cast<std::ptrdiff_t>((frame * np + p) * n));
  };
  record(0);
  bool finite = true;
  for (std::size_t k = 0; k + 1 < args.frames.size(); ++k) {
    const double t0 = args.frames[k].time;
    const double h = (args.frames[k + 1].time - t0) / static_cast<double>(args.substeps);
    for (std::size_t s = 0; s < args.substeps; ++s) {
      const double t = t0 + static_cast<double>(s) * h;
      frame_velocity(args.frames, k, t, xs, std::span<double>(k1, n));
      for (std::size_t a = 0; a < n; ++a) y[a] = x[a] + 0.5 * h * k1[a];
      frame_velocity(args.frames, k, t + 0.5 * h, ys, std::span<double>(k2, n));
      for (std::size_t a = 0; a < n; ++a) y[a] = x[a] + 0.5 * h * k2[a];
      frame_velocity(args.frames, k, t + 0.5 * h, ys, std::span<double>(k3, n));
      for (std::size_t a = 0; a < n; ++a) y[a] = x[a] + h * k3[a];
      frame_velocity(args.frames, k, t + h, ys, std::span<double>(k4, n));
      for (std::size_t a = 0; a < n; ++a) {
        x[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        if (!std::isfinite(x[a])) finite = false;
        else x[a] = fold(x[a], grid.axis(a));
      }
      if (!finite) break;
    }
    if (!finite) break;
    record(k + 1);
  }
  std::copy_n(x, n, args.positions.begin() + static_cast<std::ptrdiff_t>(p * n));
  return finite;
}

// dq/dt = g (p - A), dp/dt = -dH/dq (five-point difference).
inline bool hamilton_rhs(const ClassicalSystem& sys, std::span<const double> q,
                         std::span<const double> p, std::span<double> dq, std::span<double> dp) {
  const std::size_t n = q.size();
  if (!sys.velocity(q, p, dq)) return false;
  double shifted[kMaxDims];
  std::copy(q.begin(), q.end(), shifted);
  const std::span<const double> sq(shifted, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double h = 1e-3 * std::max(1.0, std::abs(q[k]));
    double f[4];
    const double offsets[4] = {-2.0, -1.0, 1.0, 2.0};
    for (int m = 0; m < 4; ++m) {
      shifted[k] = q[k] + offsets[m] * h;
      if (!sys.hamiltonian(sq, p, f[m])) return false;
    }
    shifted[k] = q[k];
    dp[k] = -(f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h);
  }
  return true;
}

inline bool hamilton_one(const HamiltonArgs& args, std::size_t i) {
  const ClassicalSystem& sys = *args.system;
  const std::size_t n = sys.dims();
  const std::size_t np = args.particles;
  double q[kMaxDims], p[kMaxDims], qs[kMaxDims], ps[kMaxDims];
  double kq[4][kMaxDims], kp[4][kMaxDims];
  std::copy_n(args.q.begin() + static_cast<std::ptrdiff_t>(i * n), n, q);
  std::copy_n(args.p.begin() + static_cast<std::ptrdiff_t>(i * n), n, p);
  const std::size_t every = std::max<std::size_t>(args.record_every, 1);
  auto record = [&](std::size_t step) {
    if (args.q_history.empty() || step % every != 0) return;
    std::copy_n(q, n, args.q_history.begin() + static_cast<std::ptrdiff_t>(((step / every) * np + i) * n));
  };
  record(0);
  const double h = args.dt;
  bool ok = true;
  for (std::size_t step = 1; step <= args.steps && ok; ++step) {
    const double coef[4] = {0.0, 0.5, 0.5, 1.0};
    for (int s = 0; s < 4 && ok; ++s) {
      for (std::size_t a = 0; a < n; ++a) {
        qs[a] = s == 0 ? q[a] : q[a] + coef[s] * h * kq[s - 1][a];
        ps[a] = s == 0 ? p[a] : p[a] + coef[s] * h * kp[s - 1][a];
      }
      ok = hamilton_rhs(sys, std::span<const double>(qs, n), std::span<const double>(ps, n),
                        std::span<double>(kq[s], n), std::span<double>(kp[s], n));
    }
    if (!ok) break;
    for (std::size_t a = 0; a < n; ++a) {
      q[a] += h / 6.0 * (kq[0][a] + 2.0 * kq[1][a] + 2.0 * kq[2][a] + kq[3][a]);
      p[a] += h / 6.0 * (kp[0][a] + 2.0 * kp[1][a] + 2.0 * kp[2][a] + kp[3][a]);
      if (!std::isfinite(q[a]) || !std::isfinite(p[a])) ok = false;
    }
    if (ok) record(step);
  }
  std::copy_n(q, n, args.q.begin() + static_cast<std::ptrdiff_t>(i * n));
  std::copy_n(p, n, args.p.begin() + static_cast<std::ptrdiff_t>(i * n));
  return ok;
}

// One row of the transport problem; returns the largest relative residual.
inline double transport_one(const TransportArgs& args, std::size_t r) {
  const std::size_t m = args.cols;
  std::span<complex> row = args.psi.subspan(r * m, m);
  row[0] = 0.0;
  row[m - 1] = 0.0;
  if (m < 3 || args.steps == 0) return 0.0;
  const std::size_t n = m - 2;  // interior unknowns
  const double a = args.speeds[r] * args.dt / (4.0 * args.spacing);
  if (a == 0.0) return 0.0;
  // Tridiagonal (sub = -a, diag = 1, super = +a), factored once.
  std::vector<double> cprime(n), denom(n);
  double prev = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    denom[j] = 1.0 - (j > 0 ? -a * prev : 0.0);
    cprime[j] = a / denom[j];
    prev = cprime[j];
  }
  std::vector<complex> rhs(n), x(n);
  double worst = 0.0;
  for (std::size_t step = 0; step < args.steps; ++step) {
    for (std::size_t j = 0; j < n; ++j) rhs[j] = row[j + 1] - a * (row[j + 2] - row[j]);
    // forward sweep
    complex dprev{};
    for (std::size_t j = 0; j < n; ++j) {
      const complex d = (rhs[j] - (j > 0 ? -a * dprev : complex{})) / denom[j];
      x[j] = d;
      dprev = d;
    }
    for (std::size_t j = n - 1; j-- > 0;) x[j] -= cprime[j] * x[j + 1];
    double res = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const complex lhs = x[j] + a * ((j + 1 < n ? x[j + 1] : complex{}) - (j > 0 ? x[j - 1] : complex{}));
      res = std::max(res, std::abs(lhs - rhs[j]));
      scale = std::max(scale, std::abs(rhs[j]));
    }
    if (scale > 0.0) worst = std::max(worst, res / scale);
    std::copy(x.begin(), x.end(), row.begin() + 1);
  }
  return worst;
}

}  // namespace

void set_thread_limit(int threads) { g_thread_limit.store(std::max(threads, 0)); }
int thread_limit() { return team_size(); }

// ---------------------------------------------------------------- serial

namespace serial {

EvalFailure evaluate_nodes(const expr::Program& program, const Grid& grid, double time,
                           std::span<double> out) {
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto status = eval_node(program, grid, time, k, out[k]);
    if (status != expr::EvalStatus::ok) return {status, k};
  }
  return {};
}

void csr_matvec(const CsrView& a, std::span<const complex> x, std::span<complex> y) {
  for (std::size_t r = 0; r < a.rows; ++r) matvec_row(a, x, y, r);
}

std::size_t advect_particles(const AdvectArgs& args) {
  std::size_t bad = kNone;
  for (std::size_t p = 0; p < args.particles; ++p)
    if (!advect_one(args, p) && bad == kNone) bad = p;
  return bad;
}

std::size_t integrate_hamilton(const HamiltonArgs& args) {
  std::size_t bad = kNone;
  for (std::size_t i = 0; i < args.particles; ++i)
    if (!hamilton_one(args, i) && bad == kNone) bad = i;
  return bad;
}

double transport_rows(const TransportArgs& args) {
  double worst = 0.0;
  for (std::size_t r = 0; r < args.rows; ++r) worst = std::max(worst, transport_one(args, r));
  return worst;
}

}  // namespace serial

// ---------------------------------------------------------------- OpenMP

namespace omp {

EvalFailure evaluate_nodes(const expr::Program& program, const Grid& grid, double time,
                           std::span<double> out) {
  const auto n = static_cast<std::int64_t>(grid.size());
  std::size_t first = kNone;
#pragma omp parallel for num_threads(team_size()) schedule(static) reduction(min : first)
  for (std::int64_t k = 0; k < n; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    if (eval_node(program, grid, time, uk, out[uk]) != expr::EvalStatus::ok) first = std::min(first, uk);
  }
  if (first == kNone) return {};
  double scratch = 0.0;
  return {eval_node(program, grid, time, first, scratch), first};
}

void csr_matvec(const CsrView& a, std::span<const complex> x, std::span<complex> y) {
  const auto rows = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for num_threads(team_size()) schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) matvec_row(a, x, y, static_cast<std::size_t>(r));
}

std::size_t advect_particles(const AdvectArgs& args) {
  const auto n = static_cast<std::int64_t>(args.particles);
  std::size_t bad = kNone;
#pragma omp parallel for num_threads(team_size()) schedule(dynamic, 64) reduction(min : bad)
  for (std::int64_t p = 0; p < n; ++p)
    if (!advect_one(args, static_cast<std::size_t>(p))) bad = std::min(bad, static_cast<std::size_t>(p));
  return bad;
}

std::size_t integrate_hamilton(const HamiltonArgs& args) {
  const auto n = static_cast<std::int64_t>(args.particles);
  std::size_t bad = kNone;
#pragma omp parallel for num_threads(team_size()) schedule(dynamic, 64) reduction(min : bad)
  for (std::int64_t i = 0; i < n; ++i)
    if (!hamilton_one(args, static_cast<std::size_t>(i))) bad = std::min(bad, static_cast<std::size_t>(i));
  return bad;
}

double transport_rows(const TransportArgs& args) {
  const auto rows = static_cast<std::int64_t>(args.rows);
  double worst = 0.0;
#pragma omp parallel for num_threads(team_size()) schedule(dynamic, 4) reduction(max : worst)
  for (std::int64_t r = 0; r < rows; ++r)
    worst = std::max(worst, transport_one(args, static_cast<std::size_t>(r)));
  return worst;
}

}  // namespace omp

}  // namespace hvq::kernels
