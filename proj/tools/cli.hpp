#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vrd::cli {

/// Exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one vrdtool invocation. `args` excludes the program name. Normal
/// output goes to `out`; a failure prints one `error: <kind>: <message>` line
/// to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vrd::cli
