#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "usonic/eval/config.hpp"

namespace usonic::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,  ///< bad command line or unknown subcommand
  kConfig = 2,
  kData = 3,
  kNumerical = 4,
  kInternal = 5,
};

struct RunOptions {
  std::filesystem::path out = "out";
  int limit = -1;  ///< render / beamform / features: first N clips only (-1: all)
};

/// Subcommands in the order a full run uses them.
const std::vector<std::string>& subcommands();

/// Executes one subcommand. Errors propagate as exceptions; run_main maps
/// them to exit codes.
void run(const std::string& subcommand, const eval::ExperimentConfig& cfg, const RunOptions& opts);

/// Command-line entry point. Prints diagnostics to stderr and returns the
/// exit code.
int run_main(int argc, char** argv);

}  // namespace usonic::cli
