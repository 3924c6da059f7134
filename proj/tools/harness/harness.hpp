#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace subtune::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeError = 3;

inline constexpr const char* kCsvVersionLine = "# subtune-csv v1";

struct RunOptions {
    std::string command;
    std::optional<std::string> config_path;
    std::vector<std::string> overrides;  // "key=value"
    std::filesystem::path out_dir = "subtune-out";
    std::optional<std::size_t> group;    // profile --group
    std::optional<std::string> lookup;   // greedy --lookup
    std::vector<std::string> inputs;     // report inputs
};

const std::vector<std::string>& subcommands();

/// Runs one subcommand and returns its exit code. Progress goes to `log`,
/// errors to `err`.
int run_command(const RunOptions& opts, std::ostream& log, std::ostream& err);

/// Command-line entry point (CLI11 parsing + run_command).
int main_entry(int argc, const char* const* argv);

/// Header line of each published CSV schema.
const std::vector<std::pair<std::string, std::string>>& csv_schemas();

/// A small configuration that runs every subcommand in seconds.
std::string smoke_config_text();
/// Runs `command` with the smoke config into `dir` (created fresh).
int run_smoke(const std::string& command, const std::filesystem::path& dir);
/// Subcommands exercised by the determinism check.
std::vector<std::string> determinism_commands();

}  // namespace subtune::harness
