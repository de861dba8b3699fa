#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aedes::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes shared by every subcommand.
enum ExitCode : int { ok = 0, failure = 1, usage = 2 };

/// Runs the `aedes` command line. Machine-readable JSON goes to `out`,
/// progress and diagnostics to `err`. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aedes::cli
