#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace decaf::cli {

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

/// Runs the `decaf` command line. argv[0] is the program name. Errors are
/// reported on `err` and mapped to the exit codes above.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace decaf::cli
