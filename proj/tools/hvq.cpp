// Command-line front end: hvq run | validate | version.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "hvq/kernels.hpp"
#include "hvq/run.hpp"

namespace {

/// HVQ_THREADS caps every parallel region; unset or invalid keeps the default.
void apply_thread_limit() {
  const char* env = std::getenv("HVQ_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    std::cerr << "warning: ignoring HVQ_THREADS='" << env << "' (expected a positive integer)\n";
    return;
  }
  hvq::kernels::set_thread_limit(static_cast<int>(n));
  Eigen::setNbThreads(static_cast<int>(n));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hidden-variable quantum dynamics simulator"};
  app.require_subcommand(1);
  std::string config;
  auto* run = app.add_subcommand("run", "validate and run a configuration");
  run->add_option("config", config, "JSON configuration file")->required();
  auto* validate = app.add_subcommand("validate", "check a configuration without running it");
  validate->add_option("config", config, "JSON configuration file")->required();
  auto* version = app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hvq::cli::kExitValidation;
  }
  apply_thread_limit();
  if (*version) {
    std::cout << "hvq " << hvq::cli::version() << "\n";
    return 0;
  }
  if (*validate) return hvq::cli::validate_file_command(config, std::cout, std::cerr);
  return hvq::cli::run_file(config, std::cout, std::cerr);
}
