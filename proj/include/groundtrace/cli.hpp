#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace groundtrace {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // usage or configuration error
inline constexpr int kExitData = 2;   // pipeline or data error

/// Runs one command line (without the program name). Normal output goes to
/// `out`, diagnostics and stage logs to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace groundtrace
