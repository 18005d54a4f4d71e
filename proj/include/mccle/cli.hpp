#pragma once

#include <stdexcept>
#include <string>

namespace mccle {

/// Subcommand failure with a process exit code: 2 unwritable output,
/// 3 corrupt dataset, 4 checkpoint/model-kind mismatch, 5 bad geometry.
struct CliError : std::runtime_error {
  CliError(int exit_code, const std::string& msg)
      : std::runtime_error(msg), code(exit_code) {}
  int code;
};

/// Parses and runs one subcommand (gen | train | eval | heatmap).
/// Returns the process exit code; prints errors as a single
/// machine-parsable line "mccle: E<code>: <message>" on stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace mccle
