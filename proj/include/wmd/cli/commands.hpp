// SPDX-License-Identifier: Apache-2.0
#pragma once

// train, diagnose and gradcheck subcommands plus the process entry point.
// Exit codes: 0 success, 1 failed check or unexpected error, 2 configuration
// error, 3 IO error, 4 numeric failure.

#include "wmd/cli/config.hpp"
#include "wmd/cli/gradcheck_suite.hpp"
#include "wmd/rssm/checkpoint.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace wmd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

/// Everything a diagnose run needs, rebuilt from a checkpoint.
struct TrainedRun {
  RunConfig config;
  rssm::Rssm model;
  ParameterSet params;
  ensemble::GaussianEnsemble latent;
  ensemble::GaussianEnsemble physical;
  std::vector<env::PhysicalState> states;  // every stored replay state

  /// Environment configuration with the seed that built the observation map.
  env::EnvConfig env_config() const;
  rollouts::RolloutContext context() const;
};

Checkpoint make_checkpoint(const RunConfig& cfg, const training::FitResult& fit);
TrainedRun restore_run(const Checkpoint& ckpt);

struct TrainArtifacts {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::filesystem::path resolved_config;
};

/// Fits the model and writes checkpoint.wmd, training_log.csv and
/// config.resolved.ini into cfg.output_dir.
TrainArtifacts cmd_train(const RunConfig& cfg, std::ostream& progress);

enum class DiagnoseMode { discrepancy, reward, attractor_map, uncertainty };
DiagnoseMode parse_mode(std::string_view name);
std::string to_string(DiagnoseMode mode);

struct DiagnoseOptions {
  std::filesystem::path checkpoint;
  DiagnoseMode mode = DiagnoseMode::discrepancy;
  std::string start = "random";
  std::optional<int> count;    // rollout.count from the checkpoint when unset
  std::optional<int> workers;  // run.workers when unset
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;   // output.dir when empty
};

/// Runs the rollouts of `mode` and writes CSV/SVG files named
/// <env>_<variant>_<mode>_<start>[_<suffix>].<ext>; returns their paths.
std::vector<std::filesystem::path> cmd_diagnose(const DiagnoseOptions& opts, std::ostream& progress);

/// Parses argv, runs a subcommand and maps exceptions to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wmd::cli
