#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mcen {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;           // bad flags, unreadable or malformed data
constexpr int kExitNonConvergence = 3;  // outputs are still written

/// Runs one command line (args exclude the program name). Diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

const char* tool_version();

}  // namespace mcen
