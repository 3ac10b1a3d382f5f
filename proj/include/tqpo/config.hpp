#pragma once

#include "tqpo/core.hpp"
#include "tqpo/envs.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace tqpo {

/// Run configuration file: INI sections [run], [policy], [value],
/// [schedule.alpha], [schedule.beta], [schedule.eta], [env]. Unknown sections
/// or keys are errors. Relative env.file paths resolve against the config
/// file's directory. Throws ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
std::string run_config_to_ini(const RunConfig& config);

/// Environment definition file, version 1:
///
///   [format]
///   version = 1
///   [env]
///   type = chain | hazard
///   ...
///
/// See README for the full key list.
inline constexpr int kEnvFormatVersion = 1;

std::unique_ptr<Environment> load_environment(const std::filesystem::path& path, int horizon);
std::unique_ptr<Environment> parse_environment(const std::string& text, int horizon);

/// Resolves a RunConfig's env source (preset or file) at the run horizon.
std::unique_ptr<Environment> make_environment(const RunConfig& config);

/// Sweep manifest: [manifest] base_config, out, notes; [sweep] with one
/// space-separated list per axis (variant, epsilon, threshold_d, seed).
struct ExperimentManifest {
  std::filesystem::path base_config;
  std::filesystem::path output_dir;
  std::string notes;
  std::map<std::string, std::vector<std::string>> axes;

  struct Run {
    std::string name;
    RunConfig config;
  };
  std::vector<Run> expand() const;
};

ExperimentManifest load_manifest(const std::filesystem::path& path);

}  // namespace tqpo
