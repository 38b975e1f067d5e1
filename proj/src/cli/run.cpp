#include "hvq/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "hvq/classical.hpp"
#include "hvq/dynamics.hpp"
#include "hvq/ensemble.hpp"
#include "hvq/expr.hpp"
#include "hvq/io.hpp"
#include "hvq/measurement.hpp"
#include "hvq/trajectories.hpp"
#include "hvq/verify.hpp"

#ifndef HVQ_VERSION
#define HVQ_VERSION "0.0.0"
#endif

namespace hvq::cli {

using nlohmann::json;
namespace fs = std::filesystem;

const char* version() noexcept { return HVQ_VERSION; }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::string hex;
  hex.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

namespace {

// ---------------------------------------------------------------- output writer

class Writer {
 public:
  Writer(const RunConfig& config) : root_(config.output.directory), formats_(config.output) {
    fs::create_directories(root_);
  }

  bool csv() const { return formats_.csv; }
  bool json_enabled() const { return formats_.json; }
  bool snapshot() const { return formats_.snapshot; }
  const fs::path& root() const { return root_; }

  void put(const std::string& relative, const std::string& bytes) {
    const fs::path path = root_ / relative;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    manifest_.push_back({relative, bytes.size(), sha256_hex(bytes)});
  }

  void put_snapshot(const std::string& relative, const ComplexField& field, double lambda, double time) {
    std::ostringstream ss(std::ios::binary);
    write_snapshot(ss, field, lambda, time);
    put(relative, ss.str());
  }

  std::vector<ManifestEntry>& manifest() { return manifest_; }

 private:
  fs::path root_;
  OutputBlock formats_;
  std::vector<ManifestEntry> manifest_;
};

// ---------------------------------------------------------------- checks

class Checks {
 public:
  void at_most(const std::string& name, double value, double threshold) {
    list_.push_back({name, value, threshold, "<=", 0.0, value <= threshold});
  }
  void at_least(const std::string& name, double value, double threshold) {
    list_.push_back({name, value, threshold, ">=", 0.0, value >= threshold});
  }
  void within(const std::string& name, double value, double lo, double hi) {
    list_.push_back({name, value, lo, "in", hi, value >= lo && value <= hi});
  }
  void holds(const std::string& name, bool ok) {
    list_.push_back({name, ok ? 1.0 : 0.0, 1.0, "==", 0.0, ok});
  }
  std::vector<Check>& list() { return list_; }

 private:
  std::vector<Check> list_;
};

struct Context {
  const RunConfig& config;
  Writer& writer;
  Checks& checks;
  std::ostream& log;
  std::optional<Frame> last_good;
  double last_good_lambda = 1.0;
};

// ---------------------------------------------------------------- helpers

std::string frame_name(const char* stem, std::size_t k, const char* ext) {
  return fmt::format("{}_{:04d}.{}", stem, k, ext);
}

double branch_lambda(const RunConfig& c) {
  return c.numerics.lambda.value_or(c.distribution.hbar());
}

std::vector<std::string> coordinate_names(const RunConfig& c, std::size_t dims) {
  if (c.system.coordinates.size() == dims) return c.system.coordinates;
  std::vector<std::string> names;
  for (std::size_t a = 0; a < dims; ++a) names.push_back(fmt::format("q{}", a));
  return names;
}

void zero_box_boundary(ComplexField& psi) {
  for (std::size_t k = 0; k < psi.size(); ++k)
    if (psi.grid().on_box_boundary(k)) psi[k] = 0.0;
}

/// A exp(i phase), or A exp(i S / |lambda|) in action form, pinned to zero on
/// box ends and optionally normalized.
ComplexField initial_state(const RunConfig& c, const Grid& grid, double lambda_abs) {
  const auto& coords = c.system.coordinates;
  const ScalarField amp = expr::evaluate_on_grid(expr::Expression::parse(c.initial.amplitude, coords), grid, 0.0);
  const bool action = !c.initial.action.empty();
  const ScalarField ph = expr::evaluate_on_grid(
      expr::Expression::parse(action ? c.initial.action : c.initial.phase, coords), grid, 0.0);
  ComplexField psi(grid);
  for (std::size_t k = 0; k < psi.size(); ++k)
    psi[k] = std::polar(1.0, action ? ph[k] / lambda_abs : ph[k]) * amp[k];
  zero_box_boundary(psi);
  return c.initial.normalize ? normalize(psi) : psi;
}

/// The initial action S0 (hbar times the phase when given as a phase).
ScalarField initial_action(const RunConfig& c, const Grid& grid, double hbar) {
  const auto& coords = c.system.coordinates;
  if (!c.initial.action.empty())
    return expr::evaluate_on_grid(expr::Expression::parse(c.initial.action, coords), grid, 0.0);
  ScalarField s = expr::evaluate_on_grid(expr::Expression::parse(c.initial.phase, coords), grid, 0.0);
  for (auto& v : s.values()) v *= hbar;
  return s;
}

ScalarField normalized_density(const ComplexField& psi) {
  ScalarField rho = density(psi);
  const double total = integrate(rho);
  if (!(total > 0.0)) throw InvalidArgument("initial density has zero mass");
  for (auto& v : rho.values()) v /= total;
  return rho;
}

std::vector<double> mean_position(const ScalarField& rho) {
  const Grid& g = rho.grid();
  const double total = integrate(rho);
  std::vector<double> mean(g.dims(), 0.0);
  for (std::size_t a = 0; a < g.dims(); ++a) {
    ScalarField w(g);
    for (std::size_t k = 0; k < g.size(); ++k) w[k] = g.coordinate(k, a) * rho[k];
    mean[a] = integrate(w) / total;
  }
  return mean;
}

std::string header(const std::vector<std::string>& names, const std::string& lead, const std::string& tail) {
  std::string h = lead;
  for (const auto& n : names) h += (h.empty() ? "" : ",") + n;
  return h + (h.empty() ? "" : ",") + tail + "\n";
}

void append_rows(std::string& out, double time, const ScalarField& f) {
  const Grid& g = f.grid();
  for (std::size_t k = 0; k < g.size(); ++k) {
    out += format_real(time);
    for (std::size_t a = 0; a < g.dims(); ++a) out += ',' + format_real(g.coordinate(k, a));
    out += ',' + format_real(f[k]) + '\n';
  }
}

std::string scalar_csv(const ScalarField& f, const std::vector<std::string>& names, const std::string& value) {
  std::ostringstream ss;
  write_field_csv(ss, f, names, value);
  return ss.str();
}

double norm_drift(const std::vector<Frame>& frames) {
  const double n0 = norm_squared(frames.front().psi);
  double drift = 0.0;
  for (const auto& f : frames) drift = std::max(drift, std::abs(norm_squared(f.psi) - n0));
  return drift;
}

PropagationOptions propagation_options(const RunConfig& c) {
  return {c.numerics.t_final, c.numerics.dt, c.numerics.snapshot_every};
}

std::vector<Axis> refine(std::vector<Axis> axes, std::size_t level) {
  for (auto& a : axes)
    for (std::size_t r = 0; r < level; ++r)
      a.points = a.boundary == Boundary::periodic ? 2 * a.points : 2 * (a.points - 1) + 1;
  return axes;
}

// ---------------------------------------------------------------- experiments

json run_propagate(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Grid grid(c.axes);
  const ClassicalSystem sys = build_system(c);
  const double lambda = branch_lambda(c);
  const ComplexField psi0 = initial_state(c, grid, std::abs(lambda));
  ctx.last_good = Frame{0.0, psi0};
  ctx.last_good_lambda = lambda;
  const DiscreteHamiltonian h = build_hamiltonian(sys, grid, std::abs(lambda));
  const auto frames = propagate(psi0, h, propagation_options(c));
  ctx.last_good = frames.back();

  const auto names = coordinate_names(c, grid.dims());
  const double e0 = energy(h, frames.front().psi);
  double energy_drift = 0.0;
  json series = json::array();
  std::string moments = "time,norm,energy";
  for (const auto& n : names) moments += ",mean_" + n;
  moments += "\n";
  std::string densities = header(names, "time", "density");
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& f = frames[k];
    const double e = energy(h, f.psi);
    energy_drift = std::max(energy_drift, std::abs(e - e0) / std::max(1.0, std::abs(e0)));
    const ScalarField rho = density(f.psi);
    const auto mean = mean_position(rho);
    moments += fmt::format("{},{},{}", format_real(f.time), format_real(norm_squared(f.psi)), format_real(e));
    for (double m : mean) moments += ',' + format_real(m);
    moments += '\n';
    append_rows(densities, f.time, rho);
    series.push_back({{"time", f.time}, {"norm", norm_squared(f.psi)}, {"energy", e}, {"mean", mean}});
    if (ctx.writer.snapshot()) ctx.writer.put_snapshot(frame_name("psi", k, "hvq"), f.psi, lambda, f.time);
  }
  if (ctx.writer.csv()) {
    ctx.writer.put("moments.csv", moments);
    ctx.writer.put("density.csv", densities);
  }
  const double drift = norm_drift(frames);
  ctx.checks.at_most("norm_drift", drift, c.assertions.max_norm_drift);
  ctx.checks.at_most("energy_drift", energy_drift, c.assertions.max_energy_drift);
  return {{"lambda", lambda},
          {"steps", step_count(c.numerics.t_final, c.numerics.dt)},
          {"frames", frames.size()},
          {"norm_drift", drift},
          {"energy_drift", energy_drift},
          {"series", series}};
}

json run_trajectories(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Grid grid(c.axes);
  const ClassicalSystem sys = build_system(c);
  const double lambda = branch_lambda(c);
  const double lambda_abs = std::abs(lambda);
  const ComplexField psi0 = initial_state(c, grid, lambda_abs);
  ctx.last_good = Frame{0.0, psi0};
  ctx.last_good_lambda = lambda;
  const auto frames = propagate(psi0, sys, lambda, propagation_options(c));
  ctx.last_good = frames.back();

  const GridCoefficients coeffs = evaluate_coefficients(sys, grid);
  const auto velocities = velocity_frames(frames, coeffs, lambda_abs);
  const auto start = sample_particles(psi0, c.numerics.n_particles, c.numerics.seed, c.numerics.sampling);
  const auto moved = advect(start, velocities, c.numerics.substeps);

  std::string born = "time,born_distance\n";
  json born_series = json::array();
  double worst = 0.0;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const double d = born_distance(moved.history[k], frames[k].psi, c.numerics.born_coarsen);
    worst = std::max(worst, d);
    born += format_real(frames[k].time) + ',' + format_real(d) + '\n';
    born_series.push_back({{"time", frames[k].time}, {"born_distance", d}});
    if (ctx.writer.snapshot()) ctx.writer.put_snapshot(frame_name("psi", k, "hvq"), frames[k].psi, lambda, frames[k].time);
  }
  if (ctx.writer.csv()) {
    TrajectoryEnsemble subset;
    subset.dims = moved.dims;
    subset.particles = std::min(c.numerics.export_particles, moved.particles);
    subset.times = moved.times;
    const std::size_t width = subset.particles * subset.dims;
    subset.positions.assign(moved.positions.begin(), moved.positions.begin() + static_cast<std::ptrdiff_t>(width));
    for (const auto& h : moved.history)
      subset.history.emplace_back(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(width));
    std::ostringstream ss;
    write_trajectories_csv(ss, subset, coordinate_names(c, grid.dims()));
    ctx.writer.put("trajectories.csv", ss.str());
    ctx.writer.put("born.csv", born);
  }
  const double drift = norm_drift(frames);
  ctx.checks.at_most("born_distance", worst, c.assertions.max_born_distance);
  ctx.checks.at_most("norm_drift", drift, c.assertions.max_norm_drift);
  return {{"lambda", lambda},
          {"particles", moved.particles},
          {"born_coarsen", c.numerics.born_coarsen},
          {"max_born_distance", worst},
          {"norm_drift", drift},
          {"born_distance", born_series}};
}

json run_ensemble(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Grid grid(c.axes);
  const ClassicalSystem sys = build_system(c);
  const std::size_t n = c.numerics.n_lambda_nodes;
  EnsembleRun run;
  if (!c.initial.action.empty()) {
    const ComplexField ref = initial_state(c, grid, c.distribution.hbar());
    ActionState init{ScalarField(grid), initial_action(c, grid, c.distribution.hbar())};
    for (std::size_t k = 0; k < grid.size(); ++k) init.R[k] = std::abs(ref[k]);
    ctx.last_good = Frame{0.0, ref};
    run = propagate_ensemble(init, sys, c.distribution, n, propagation_options(c));
  } else {
    const ComplexField psi0 = initial_state(c, grid, c.distribution.hbar());
    ctx.last_good = Frame{0.0, psi0};
    run = propagate_ensemble(psi0, sys, c.distribution, n, propagation_options(c));
  }
  ctx.last_good_lambda = c.distribution.hbar();

  const auto names = coordinate_names(c, grid.dims());
  std::string marginal = header(names, "time", "density");
  json mass = json::array();
  double mass_error = 0.0;
  for (const auto& e : run.series) {
    const ScalarField rho = marginal_density(e);
    const double m = integrate(rho);
    mass_error = std::max(mass_error, std::abs(m - 1.0));
    mass.push_back({{"time", e.time}, {"mass", m}});
    append_rows(marginal, e.time, rho);
  }
  double branch_drift = 0.0;
  for (std::size_t b = 0; b < run.magnitudes.size(); ++b) {
    const double n0 = norm_squared(run.series.front().fields[b]);
    for (const auto& e : run.series) branch_drift = std::max(branch_drift, std::abs(norm_squared(e.fields[b]) - n0));
  }
  const auto& last = run.series.back();
  std::string nodes = "lambda,weight\n";
  for (const auto& node : last.nodes) nodes += format_real(node.lambda) + ',' + format_real(node.weight) + '\n';
  if (ctx.writer.csv()) {
    ctx.writer.put("marginal.csv", marginal);
    ctx.writer.put("lambda_nodes.csv", nodes);
  }
  if (ctx.writer.snapshot())
    for (std::size_t b = 0; b < last.fields.size(); ++b)
      ctx.writer.put_snapshot(frame_name("branch", b, "hvq"), last.fields[b], run.magnitudes[b], last.time);
  ctx.checks.at_most("marginal_mass_error", mass_error, c.assertions.max_marginal_mass_error);
  ctx.checks.at_most("norm_drift", branch_drift, c.assertions.max_norm_drift);
  return {{"distribution", c.distribution.describe()},
          {"magnitudes", run.magnitudes},
          {"nodes", last.nodes.size()},
          {"marginal_mass_error", mass_error},
          {"norm_drift", branch_drift},
          {"mass", mass}};
}

json run_double_slit(Context& ctx) {
  const RunConfig& c = ctx.config;
  const auto& d = c.double_slit;
  DoubleSlitConfig ds;
  ds.grid = Grid(c.axes);
  ds.mass = d.mass;
  ds.separation = d.separation;
  ds.width = d.width;
  ds.momentum = d.momentum;
  ds.t_final = c.numerics.t_final;
  ds.dt = c.numerics.dt;
  ds.central_half_width = d.central_half_width;
  ds.n_nodes = c.numerics.n_lambda_nodes;
  const DoubleSlitResult result = double_slit(ds, c.distribution);
  const auto names = coordinate_names(c, 1);
  if (ctx.writer.csv()) ctx.writer.put("intensity.csv", scalar_csv(result.intensity, names, "intensity"));

  json out = {{"distribution", c.distribution.describe()},
              {"visibility", result.visibility},
              {"overlap", result.overlap},
              {"normalization", result.normalization},
              {"magnitudes", result.magnitudes}};
  ctx.checks.at_most("mass_error", std::abs(integrate(result.intensity) - 1.0), c.assertions.max_marginal_mass_error);
  if (!d.sigma_sweep.empty()) {
    std::vector<double> sigmas = d.sigma_sweep;
    std::sort(sigmas.begin(), sigmas.end());
    std::string sweep = "sigma,visibility\n";
    json rows = json::array();
    std::vector<double> vis;
    for (double s : sigmas) {
      const auto r = double_slit(ds, LambdaDistribution::lognormal(s, c.distribution.hbar()));
      vis.push_back(r.visibility);
      sweep += format_real(s) + ',' + format_real(r.visibility) + '\n';
      rows.push_back({{"sigma", s}, {"visibility", r.visibility}});
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < vis.size(); ++i) decreasing = decreasing && vis[i] < vis[i - 1];
    ctx.checks.holds("visibility_decreasing_in_sigma", decreasing);
    if (ctx.writer.csv()) ctx.writer.put("visibility_sweep.csv", sweep);
    out["sweep"] = rows;
  }
  return out;
}

PointerStatistics angular_statistics(const RunConfig& c, const LambdaDistribution& dist, MeasurementSetup& setup) {
  setup.dist = dist;
  return pointer_distribution(setup, c.numerics.n_lambda_nodes, c.measurement.min_separation);
}

/// Closed-form mean and variance of l' = |lambda| l / hbar.
std::pair<double, double> inferred_oracle(const std::vector<EigenComponent>& comps, const LambdaDistribution& dist) {
  double m1 = 0.0, m2 = 0.0;
  for (const auto& e : comps) {
    m1 += std::norm(e.c) * e.l;
    m2 += std::norm(e.c) * e.l * e.l;
  }
  const double h = dist.hbar();
  const double mean = m1 * dist.abs_mean() / h;
  return {mean, m2 * dist.second_moment() / (h * h) - mean * mean};
}

/// Mean and variance of a 1D density.
std::pair<double, double> density_moments(const ScalarField& rho) {
  const Grid& g = rho.grid();
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double w = g.quadrature_weight(k) * rho[k], x = g.coordinate(k, 0);
    m0 += w;
    m1 += w * x;
    m2 += w * x * x;
  }
  return {m1 / m0, m2 / m0 - (m1 / m0) * (m1 / m0)};
}

/// Outcome moments read off the pointer density: every packet is a
/// translate of phi0 by g T l', so the mean shifts by g T E[l'] and the
/// variance grows by (g T)^2 Var[l'].
std::pair<double, double> pointer_moments(const PointerStatistics& stats, const MeasurementSetup& setup) {
  const double gt = setup.coupling * setup.duration;
  const auto [m0, v0] = density_moments(density(setup.pointer0));
  const auto [m, v] = density_moments(stats.pointer_density);
  return {(m - m0) / gt, (v - v0) / (gt * gt)};
}

json run_measure_angular(Context& ctx) {
  const RunConfig& c = ctx.config;
  const auto& m = c.measurement;
  const Grid pg({m.pointer_axis});
  ComplexField phi(pg);
  for (std::size_t k = 0; k < pg.size(); ++k) {
    const double x = (pg.coordinate(k, 0) - m.pointer_center) / m.pointer_width;
    phi[k] = std::exp(-0.25 * x * x);
  }
  zero_box_boundary(phi);
  MeasurementSetup setup{m.coupling, m.duration, m.components, normalize(phi), c.distribution};
  const double tol = c.assertions.max_residual.value_or(1e-6);

  const PointerStatistics stats = angular_statistics(c, c.distribution, setup);
  const auto [mean, var] = inferred_oracle(m.components, c.distribution);
  ctx.checks.at_most("inferred_mean_error", std::abs(stats.inferred_mean - mean), tol);
  ctx.checks.at_most("inferred_variance_error", std::abs(stats.inferred_variance - var), tol);
  const bool coupled = m.coupling * m.duration != 0.0;
  std::pair<double, double> read{0.0, 0.0};
  if (coupled) {
    read = pointer_moments(stats, setup);
    ctx.checks.at_most("pointer_mean_error", std::abs(read.first - mean), tol);
    ctx.checks.at_most("pointer_variance_error", std::abs(read.second - var), tol);
  }
  ctx.checks.at_most("pointer_mass_error", std::abs(integrate(stats.pointer_density) - 1.0),
                     c.assertions.max_marginal_mass_error);

  json peaks = json::array();
  std::string peak_csv = "location,mass,inferred\n";
  for (const auto& p : stats.peaks) {
    peaks.push_back({{"location", p.location}, {"mass", p.mass}, {"inferred", p.inferred}});
    peak_csv += format_real(p.location) + ',' + format_real(p.mass) + ',' + format_real(p.inferred) + '\n';
  }
  if (ctx.writer.csv()) {
    ctx.writer.put("pointer.csv", scalar_csv(stats.pointer_density, {"q2"}, "density"));
    ctx.writer.put("peaks.csv", peak_csv);
  }
  if (ctx.writer.snapshot()) ctx.writer.put_snapshot("pointer0.hvq", setup.pointer0, c.distribution.hbar(), 0.0);

  json out = {{"distribution", c.distribution.describe()},
              {"inferred_mean", stats.inferred_mean},
              {"inferred_variance", stats.inferred_variance},
              {"oracle_mean", mean},
              {"oracle_variance", var},
              {"ambiguous", stats.ambiguous},
              {"peaks", peaks}};
  if (coupled) {
    out["pointer_mean"] = read.first;
    out["pointer_variance"] = read.second;
  }
  if (!m.sigma_sweep.empty()) {
    std::vector<double> sigmas = m.sigma_sweep;
    std::sort(sigmas.begin(), sigmas.end());
    json rows = json::array();
    std::string sweep = "sigma,inferred_mean,inferred_variance,oracle_mean,oracle_variance\n";
    std::vector<double> variances;
    double worst = 0.0;
    for (double s : sigmas) {
      const auto dist = LambdaDistribution::lognormal(s, c.distribution.hbar());
      const auto st = angular_statistics(c, dist, setup);
      const auto [om, ov] = inferred_oracle(m.components, dist);
      worst = std::max({worst, std::abs(st.inferred_mean - om), std::abs(st.inferred_variance - ov)});
      if (coupled) {
        const auto [pm, pv] = pointer_moments(st, setup);
        worst = std::max({worst, std::abs(pm - om), std::abs(pv - ov)});
      }
      variances.push_back(st.inferred_variance);
      rows.push_back({{"sigma", s}, {"inferred_mean", st.inferred_mean}, {"inferred_variance", st.inferred_variance},
                      {"oracle_mean", om}, {"oracle_variance", ov}});
      sweep += fmt::format("{},{},{},{},{}\n", format_real(s), format_real(st.inferred_mean),
                           format_real(st.inferred_variance), format_real(om), format_real(ov));
    }
    bool increasing = true;
    for (std::size_t i = 1; i < variances.size(); ++i) increasing = increasing && variances[i] > variances[i - 1];
    ctx.checks.at_most("sweep_moment_error", worst, tol);
    ctx.checks.holds("variance_increasing_in_sigma", increasing);
    if (ctx.writer.csv()) ctx.writer.put("sigma_sweep.csv", sweep);
    out["sweep"] = rows;
  }
  return out;
}

json run_measure_position(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Grid grid(c.axes);
  const double hbar = c.distribution.hbar();
  const ComplexField psi0 = initial_state(c, grid, hbar);
  ctx.last_good = Frame{0.0, psi0};
  ctx.last_good_lambda = hbar;
  const ScalarField rho0 = normalized_density(psi0);
  const ScalarField s0 = initial_action(c, grid, hbar);
  const auto report = position_measurement_check(rho0, s0, c.measurement.coupling, c.measurement.duration,
                                                 c.numerics.dt, hbar);
  const auto names = coordinate_names(c, 2);
  if (ctx.writer.csv()) {
    ctx.writer.put("quantum_density.csv", scalar_csv(report.quantum, names, "density"));
    ctx.writer.put("classical_density.csv", scalar_csv(report.classical, names, "density"));
  }
  ctx.checks.at_most("max_position_difference", report.max_difference, c.assertions.max_position_difference);
  ctx.checks.at_most("norm_drift", report.norm_drift, c.assertions.max_norm_drift);
  ctx.checks.at_most("solve_residual", report.solve_residual, CrankNicolson::kResidualTolerance);
  return {{"max_difference", report.max_difference},
          {"cfl", report.cfl},
          {"cfl_exceeded", report.cfl_exceeded},
          {"norm_drift", report.norm_drift},
          {"solve_residual", report.solve_residual}};
}

json run_classical(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Grid grid(c.axes);
  const ClassicalSystem sys = build_system(c);
  const double hbar = c.distribution.hbar();
  const ScalarField s0 = initial_action(c, grid, hbar);
  ComplexField psi0 = initial_state(c, grid, hbar);
  const ScalarField rho0 = normalized_density(psi0);
  for (std::size_t k = 0; k < grid.size(); ++k) psi0[k] = std::polar(std::sqrt(rho0[k]), s0[k] / hbar);
  zero_box_boundary(psi0);
  psi0 = normalize(psi0);
  ctx.last_good = Frame{0.0, psi0};
  ctx.last_good_lambda = hbar;

  const auto opts = propagation_options(c);
  const auto run = evolve_classical_ensemble(rho0, s0, sys, opts, c.numerics.n_particles, c.numerics.seed,
                                             c.numerics.sampling);
  const auto quantum = propagate(psi0, sys, hbar, opts);
  ctx.last_good = quantum.back();
  const auto comparison = classical_limit_compare(quantum, run);

  const auto names = coordinate_names(c, grid.dims());
  std::string cmp = "time,l1,mean_gap,variance_gap,escaped\n";
  std::string dens = header(names, "time", "density");
  json rows = json::array();
  double worst_gap = 0.0;
  for (std::size_t k = 0; k < comparison.size(); ++k) {
    const auto& p = comparison[k];
    worst_gap = std::max(worst_gap, p.mean_gap);
    cmp += fmt::format("{},{},{},{},{}\n", format_real(p.time), format_real(p.l1), format_real(p.mean_gap),
                       format_real(p.variance_gap), run.escaped[k]);
    rows.push_back({{"time", p.time}, {"l1", p.l1}, {"mean_gap", p.mean_gap}, {"variance_gap", p.variance_gap},
                    {"escaped", run.escaped[k]}});
    append_rows(dens, run.times[k], run.densities[k]);
  }
  if (ctx.writer.csv()) {
    ctx.writer.put("comparison.csv", cmp);
    ctx.writer.put("classical_density.csv", dens);
    std::string traj = header(names, "time,particle", "");
    traj.erase(traj.size() - 2);  // drop the trailing empty column
    traj += "\n";
    const std::size_t dims = grid.dims();
    const std::size_t keep = std::min(c.numerics.export_particles, c.numerics.n_particles);
    for (std::size_t k = 0; k < run.times.size(); ++k)
      for (std::size_t p = 0; p < keep; ++p) {
        traj += format_real(run.times[k]) + ',' + std::to_string(p);
        for (std::size_t a = 0; a < dims; ++a) traj += ',' + format_real(run.positions[k][p * dims + a]);
        traj += '\n';
      }
    ctx.writer.put("classical_trajectories.csv", traj);
  }
  const double drift = norm_drift(quantum);
  ctx.checks.at_most("norm_drift", drift, c.assertions.max_norm_drift);
  if (c.assertions.max_mean_gap) ctx.checks.at_most("mean_gap", worst_gap, *c.assertions.max_mean_gap);
  return {{"post_caustic", run.post_caustic},
          {"caustic_time", run.caustic_time},
          {"max_mean_gap", worst_gap},
          {"norm_drift", drift},
          {"comparison", rows}};
}

json run_verify(Context& ctx) {
  const RunConfig& c = ctx.config;
  const ClassicalSystem sys = build_system(c);
  const double lambda = branch_lambda(c);
  const auto& v = c.verify;
  const auto& a = c.assertions;
  const ResidualOptions opts{v.margin, v.support_floor, 2};
  auto wants = [&](const char* name) { return std::find(v.checks.begin(), v.checks.end(), name) != v.checks.end(); };

  std::map<std::string, std::vector<double>> residuals;
  std::string table = "check,level,points,dt,max_residual\n";
  double drift = 0.0;
  for (std::size_t level = 0; level <= v.refinements; ++level) {
    const Grid grid(refine(c.axes, level));
    const double dt = c.numerics.dt / std::pow(2.0, static_cast<double>(level));
    auto record = [&](const std::string& name, double value) {
      residuals[name].push_back(value);
      table += fmt::format("{},{},{},{},{}\n", name, level, grid.size(), format_real(dt), format_real(value));
    };
    if (wants("identity")) {
      ScalarField amp =
          expr::evaluate_on_grid(expr::Expression::parse(c.initial.amplitude, c.system.coordinates), grid, 0.0);
      for (auto& x : amp.values()) x *= x;
      record("identity", identity_check(amp, v.margin).max_residual);
    }
    if (wants("hjm") || wants("continuity")) {
      const ComplexField psi0 = initial_state(c, grid, std::abs(lambda));
      ctx.last_good = Frame{0.0, psi0};
      ctx.last_good_lambda = lambda;
      const std::size_t steps = step_count(c.numerics.t_final, dt);
      const auto frames = propagate(psi0, sys, lambda, {c.numerics.t_final, dt, std::max<std::size_t>(1, steps - 1)});
      ctx.last_good = frames.back();
      drift = std::max(drift, norm_drift(frames));
      const auto& p0 = frames[frames.size() - 2].psi;
      const auto& p1 = frames.back().psi;
      if (wants("hjm")) record("hjm", hjm_residual(p0, p1, dt, sys, lambda, opts).max_residual);
      if (wants("continuity")) record("continuity", continuity_residual(p0, p1, dt, sys, lambda, opts).max_residual);
    }
  }
  json out = json::object();
  for (const auto& [name, values] : residuals) {
    json ratios = json::array();
    for (std::size_t i = 1; i < values.size(); ++i) {
      const double r = values[i - 1] / values[i];
      ratios.push_back(r);
      ctx.checks.within(fmt::format("{}_convergence_ratio_{}", name, i), r, a.convergence_ratio_min,
                        a.convergence_ratio_max);
    }
    if (a.max_residual) ctx.checks.at_most(name + "_max_residual", values.back(), *a.max_residual);
    out[name] = {{"max_residual", values}, {"ratios", ratios}};
  }
  if (wants("hjm") || wants("continuity")) ctx.checks.at_most("norm_drift", drift, a.max_norm_drift);
  if (wants("symmetry")) {
    const Grid grid(c.axes);
    const ComplexField psi0 = initial_state(c, grid, std::abs(lambda));
    const auto opts_p = propagation_options(c);
    const auto plus = propagate(psi0, sys, std::abs(lambda), opts_p);
    const auto minus = propagate(psi0, sys, -std::abs(lambda), opts_p);
    const auto sym = sign_symmetry_check(plus, minus);
    ctx.checks.holds("sign_symmetry", sym.symmetric && !sym.premise_violated);
    out["symmetry"] = {{"symmetric", sym.symmetric}, {"premise_violated", sym.premise_violated}};
  }
  if (ctx.writer.csv()) ctx.writer.put("residuals.csv", table);
  return out;
}

json dispatch(Context& ctx) {
  switch (ctx.config.experiment) {
    case Experiment::propagate: return run_propagate(ctx);
    case Experiment::trajectories: return run_trajectories(ctx);
    case Experiment::ensemble: return run_ensemble(ctx);
    case Experiment::double_slit: return run_double_slit(ctx);
    case Experiment::measure_angular: return run_measure_angular(ctx);
    case Experiment::measure_position: return run_measure_position(ctx);
    case Experiment::classical: return run_classical(ctx);
    case Experiment::verify: return run_verify(ctx);
  }
  throw InvalidArgument("unknown experiment");
}

json check_json(const Check& c) {
  json j = {{"name", c.name}, {"value", c.value}, {"relation", c.relation}, {"pass", c.pass}};
  if (c.relation == "in") j["range"] = {c.threshold, c.upper};
  else j["threshold"] = c.threshold;
  return j;
}

}  // namespace

RunResult run(const RunConfig& config, std::ostream& log) {
  const auto started = std::chrono::steady_clock::now();
  RunResult result;
  Writer writer(config);
  Checks checks;
  Context ctx{config, writer, checks, log, std::nullopt, 1.0};
  json results;
  try {
    results = dispatch(ctx);
    const bool all = std::all_of(checks.list().begin(), checks.list().end(), [](const Check& c) { return c.pass; });
    result.status = all ? "pass" : "fail";
    result.exit_code = all ? kExitOk : kExitAssertion;
    if (config.output.json) writer.put("results.json", results.dump(2) + "\n");
  } catch (const PropagationAbort& e) {
    ctx.last_good = e.last_good();
    result.status = "aborted";
    result.exit_code = kExitNumerical;
    result.message = e.what();
  } catch (const NumericalError& e) {
    result.status = "aborted";
    result.exit_code = kExitNumerical;
    result.message = e.what();
  } catch (const UnwrapError& e) {
    result.status = "aborted";
    result.exit_code = kExitNumerical;
    result.message = e.what();
  } catch (const Error& e) {
    result.status = "invalid";
    result.exit_code = kExitValidation;
    result.message = e.what();
  }
  if (result.exit_code == kExitNumerical && ctx.last_good) {
    writer.put_snapshot("last_good.hvq", ctx.last_good->psi, ctx.last_good_lambda, ctx.last_good->time);
    result.last_good_path = (writer.root() / "last_good.hvq").string();
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  result.checks = checks.list();
  result.manifest = writer.manifest();
  json report;
  report["version"] = version();
  report["experiment"] = to_string(config.experiment);
  report["config"] = config.echo;
  report["status"] = result.status;
  report["exit_code"] = result.exit_code;
  if (!result.message.empty()) report["message"] = result.message;
  if (!result.last_good_path.empty()) report["last_good_snapshot"] = "last_good.hvq";
  report["wall_time_seconds"] = wall;
  report["checks"] = json::array();
  for (const auto& c : result.checks) report["checks"].push_back(check_json(c));
  if (!results.is_null()) report["results"] = results;
  report["manifest"] = json::array();
  for (const auto& m : result.manifest)
    report["manifest"].push_back({{"path", m.path}, {"bytes", m.bytes}, {"sha256", m.sha256}});
  result.report = report;
  const fs::path report_path = writer.root() / "report.json";
  std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
  out << report.dump(2) << "\n";
  result.report_path = report_path.string();
  return result;
}

int validate_file_command(const std::string& path, std::ostream& out, std::ostream& err) {
  const Validation v = validate_file(path);
  for (const auto& d : v.diagnostics) err << path << ": " << format_diagnostic(d) << "\n";
  if (!v.ok()) return kExitValidation;
  out << path << ": ok (" << to_string(v.config->experiment) << ")\n";
  return kExitOk;
}

int run_file(const std::string& path, std::ostream& out, std::ostream& err) {
  const Validation v = validate_file(path);
  for (const auto& d : v.diagnostics) err << path << ": " << format_diagnostic(d) << "\n";
  if (!v.ok()) return kExitValidation;
  RunResult r;
  try {
    r = run(*v.config, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  for (const auto& c : r.checks)
    out << fmt::format("{} {} = {}\n", c.pass ? "PASS" : "FAIL", c.name, format_real(c.value));
  if (!r.message.empty()) err << "error: " << r.message << "\n";
  if (!r.last_good_path.empty()) err << "last good snapshot: " << r.last_good_path << "\n";
  out << "report: " << r.report_path << "\n";
  return r.exit_code;
}

}  // namespace hvq::cli
