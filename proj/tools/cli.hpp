#pragma once

// Command-line front end: simulate, estimate, metrics, compare.
//
// Every setting is a named key. A key is resolved from, in order, the
// `--key-name` flag, the ALTRUIST_KEY_NAME environment variable, the JSON
// config file (`--config`), then the built-in default. A manifest written by
// any command can be passed back as the config file.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "altruist/admm.hpp"
#include "altruist/metrics.hpp"
#include "altruist/phantom.hpp"
#include "altruist/seed.hpp"

namespace altruist::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalid = 2,
  kExitSolver = 3,
  kExitIo = 4,
};

struct KeySpec {
  std::string_view name;
  std::string_view fallback;  // empty: taken from the selected preset
  std::string_view help;
};

std::span<const KeySpec> known_keys();

using Config = std::map<std::string, std::string>;

/// `seed_max_lag` -> `ALTRUIST_SEED_MAX_LAG`.
std::string env_name(std::string_view key);

/// Resolves every known key. Throws InvalidArgument on an unknown key in any
/// source.
Config resolve_config(const Config& flags, const Config& env,
                      const std::optional<std::filesystem::path>& config_file);

/// ALTRUIST_* variables from a `KEY=VALUE` list, keyed by config name.
/// `ALTRUIST_CONFIG` is returned under "config".
Config environment_overrides(std::span<const std::string> environment);

RegParams reg_params(const Config& cfg);
SeedParams seed_params(const Config& cfg);
SolverConfig solver_config(const Config& cfg);
PhantomSpec phantom_spec(const Config& cfg);

WindowSet read_windows(const std::filesystem::path& path);
void write_windows(const std::filesystem::path& path, const WindowSet& windows);

std::string sha256_hex(const std::filesystem::path& path);

/// Runs one command line (args[0] is the program name) and returns the exit
/// code. Diagnostics go to stderr.
int run(const std::vector<std::string>& args, std::span<const std::string> environment);
int run(int argc, char** argv);

}  // namespace altruist::cli
