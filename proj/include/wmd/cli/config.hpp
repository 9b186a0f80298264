// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration: an INI file with sections env, model, train, ensemble,
// rollout, diagnostics, output and run. Every key has a default; unknown
// sections or keys are rejected. WMD_<SECTION>__<KEY> environment variables
// override file values (e.g. WMD_TRAIN__ENV_STEPS=5000).

#include "wmd/rollouts/rollouts.hpp"
#include "wmd/training/trainer.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace wmd::cli {

struct DiagnosticsOptions {
  int knn = 100;
  int bins = 40;
  /// Rollout kinds pooled into the attractor map: "prior", "posterior" or "both".
  std::string field_kinds = "both";
  int exemplars = 3;
};

struct RunConfig {
  training::FitConfig fit;
  rollouts::RolloutSpec rollout;
  int rollout_count = 1000;
  DiagnosticsOptions diagnostics;
  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 0;
  int workers = 1;

  /// Throws ConfigError on any invalid value.
  void validate() const;
};

/// Reader of environment variables; injectable for tests.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_environment();

/// Defaults, then the file (when non-empty), then environment overrides.
/// Throws ConfigError naming the file and key on any problem.
RunConfig load_run_config(const std::filesystem::path& path, const EnvLookup& env = process_environment());

/// Applies `section.key = value` pairs in order.
void apply_settings(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& settings,
                    const std::string& origin);

/// Every key with its current value, grouped by section, as INI text that
/// load_run_config reads back to the same configuration.
void write_resolved(std::ostream& out, const RunConfig& cfg);
std::map<std::string, std::string> resolved_map(const RunConfig& cfg);

/// Documented keys as "section.key", in emission order.
std::vector<std::string> known_keys();

}  // namespace wmd::cli
