#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rawradar::cli {

// Exit codes of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Parses `args` (without the program name) and dispatches to a subcommand.
// Failures print one line "error: <category>: <message>" to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rawradar::cli
