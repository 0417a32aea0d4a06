#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

namespace swirl::cli {

/// Flags shared by every command; flags win over config values.
struct RunOptions {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> output;
  std::optional<std::size_t> workers;
  bool verbose = false;
};

void cmd_simulate(const RunOptions& options);
void cmd_fit(const RunOptions& options);
void cmd_evaluate(const RunOptions& options);
void cmd_segment(const RunOptions& options);

/// Maps an exception in flight to the documented exit code.
int exit_code_for_current_exception(std::string* message);

}  // namespace swirl::cli
