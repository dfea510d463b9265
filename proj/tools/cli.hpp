#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace effattn::cli {

// Exit codes: 0 success / check passed, 1 runtime or check failure, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace effattn::cli
