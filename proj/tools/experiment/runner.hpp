#pragma once

#include "config.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace fnascent::experiment {

// Exit codes of the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;      // I/O and other unexpected failures
inline constexpr int kExitConfig = 2;     // invalid configuration; nothing written
inline constexpr int kExitNumerical = 3;  // numerical failure; partial artifacts

struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> max_iter;
};

/// Commands: run-merton, run-stochvol, solve-semilinear, report.
/// Progress goes to `log`, diagnostics to `err`.
int run_command(const std::string& command, const CommandOptions& options, std::ostream& log,
                std::ostream& err);

/// Loads the config and applies command-line overrides. Throws ConfigError.
ExperimentConfig resolve_config(const CommandOptions& options);

/// Artifact writers, exposed for tests. Each returns the exit code.
int run_ascent_experiment(const std::string& command, const ExperimentConfig& config,
                          std::ostream& log, std::ostream& err);
int run_semilinear_experiment(const ExperimentConfig& config, std::ostream& log, std::ostream& err);
int run_report(const std::string& directory, std::ostream& log, std::ostream& err);

/// Shortest round-trip decimal; "nan" for NaN.
std::string format_real(double x);

}  // namespace fnascent::experiment
