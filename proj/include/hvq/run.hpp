#pragma once

// Experiment orchestration: runs a validated configuration, writes every
// output through one writer and produces the JSON run report.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "hvq/config.hpp"

namespace hvq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertion = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

const char* version() noexcept;

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // "<=", ">=", "==" or "in"
  double upper = 0.0;    // second bound for "in"
  bool pass = false;
};

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::size_t bytes = 0;
  std::string sha256;
};

struct RunResult {
  int exit_code = kExitOk;
  std::string status;  // pass, fail, aborted
  std::vector<Check> checks;
  std::vector<ManifestEntry> manifest;
  nlohmann::json report;
  std::string report_path;
  std::string last_good_path;  // set on numerical aborts
  std::string message;
};

/// Runs the experiment and writes outputs under config.output.directory.
RunResult run(const RunConfig& config, std::ostream& log);

/// Validates then runs the file; diagnostics go to `err`.
int run_file(const std::string& path, std::ostream& out, std::ostream& err);
int validate_file_command(const std::string& path, std::ostream& out, std::ostream& err);

}  // namespace hvq::cli
