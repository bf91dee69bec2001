#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace speedest::cli {

// Exit codes are a stable scripting contract.
inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_usage = 2;

/// Runs the command line `args` (program name excluded). Data goes to files
/// or `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace speedest::cli
