#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sqr::app {

enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_usage = 2,
  exit_config = 3,
  exit_ingest = 4,
  exit_numeric = 5,
};

struct Invocation {
  std::string command;
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::filesystem::path> out;
};

const std::vector<std::string>& command_names();

/// Runs one subcommand; diagnostics go to `log`. Returns the exit code.
int run(const Invocation& invocation, std::ostream& log);

}  // namespace sqr::app
