#pragma once

// Run configuration (JSON) and its validation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hvq/fields.hpp"
#include "hvq/hidden.hpp"
#include "hvq/measurement.hpp"
#include "hvq/system.hpp"
#include "hvq/trajectories.hpp"

namespace hvq::cli {

enum class Experiment {
  propagate,
  trajectories,
  ensemble,
  double_slit,
  measure_angular,
  measure_position,
  classical,
  verify
};

const char* to_string(Experiment e) noexcept;

struct Diagnostic {
  std::string pointer;  // JSON pointer of the offending value
  int line = 0;         // 1-based line in the config text, 0 if unknown
  std::string message;
};

std::string format_diagnostic(const Diagnostic& d);

struct SystemBlock {
  std::vector<std::string> coordinates;
  std::vector<std::vector<std::string>> metric_inverse;
  std::vector<std::string> vector_potential;
  std::string scalar_potential = "0";
};

struct InitialBlock {
  std::string amplitude;
  std::string phase = "0";   // radians
  std::string action;        // action S0; when set, phase = S0 / |lambda|
  bool normalize = true;
};

struct NumericsBlock {
  double dt = 0.01;
  double t_final = 1.0;
  std::size_t snapshot_every = 10;
  std::size_t n_particles = 10000;
  std::size_t n_lambda_nodes = 32;
  std::uint64_t seed = 1;
  std::size_t substeps = 4;
  std::optional<double> lambda;  // propagate/verify/trajectories branch
  Sampling sampling = Sampling::iid;
  std::size_t born_coarsen = 8;
  std::size_t export_particles = 1000;
};

struct MeasurementBlock {
  double coupling = 1.0;
  double duration = 1.0;
  std::vector<EigenComponent> components;
  Axis pointer_axis{-10.0, 10.0, 401, Boundary::box};
  double pointer_center = 0.0;
  double pointer_width = 0.5;
  double min_separation = 0.0;
  std::vector<double> sigma_sweep;
};

struct DoubleSlitBlock {
  double mass = 1.0;
  double separation = 4.0;
  double width = 0.5;
  double momentum = 4.0;
  double central_half_width = 1.0;
  std::vector<double> sigma_sweep;  // extra log-normal widths to compare
};

struct VerifyBlock {
  std::size_t refinements = 2;    // number of grid/dt halvings
  std::vector<std::string> checks{"identity", "hjm", "continuity", "symmetry"};
  double support_floor = 1e-3;
  std::size_t margin = 3;
};

struct AssertionsBlock {
  double max_norm_drift = 1e-9;
  double max_energy_drift = 1e-6;
  double max_born_distance = 0.05;
  double max_position_difference = 1e-3;
  double max_marginal_mass_error = 1e-9;
  double convergence_ratio_min = 3.5;
  double convergence_ratio_max = 4.5;
  std::optional<double> max_residual;
  std::optional<double> max_mean_gap;
};

struct OutputBlock {
  std::string directory = "out";
  bool csv = true;
  bool json = true;
  bool snapshot = true;
};

struct RunConfig {
  Experiment experiment = Experiment::propagate;
  SystemBlock system;
  std::vector<Axis> axes;
  LambdaDistribution distribution = LambdaDistribution::binary();
  InitialBlock initial;
  NumericsBlock numerics;
  MeasurementBlock measurement;
  DoubleSlitBlock double_slit;
  VerifyBlock verify;
  AssertionsBlock assertions;
  OutputBlock output;
  nlohmann::json echo;  // the parsed document
};

struct Validation {
  std::vector<Diagnostic> diagnostics;
  std::optional<RunConfig> config;  // set iff diagnostics is empty

  bool ok() const noexcept { return diagnostics.empty(); }
};

/// Parse-and-check only; no computation.
Validation validate_text(const std::string& text);
Validation validate_file(const std::string& path);

/// Line of the value at `pointer` in `text` (0 if not found).
int line_of(const std::string& text, const std::string& pointer);

/// Builds the classical system described by the config.
ClassicalSystem build_system(const RunConfig& config);

}  // namespace hvq::cli
