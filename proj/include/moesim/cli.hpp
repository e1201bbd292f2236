#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace moesim {

// Exit codes of the command-line driver.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs the `moesim` command line. args excludes the program name. Diagnostics go
// to `err` as a single line; "-" output paths write to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace moesim
