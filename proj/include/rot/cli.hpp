#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rot::cli {

// Exit statuses: 0 success, 1 invalid input or usage, 2 no convergence.
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNotConverged = 2;

/// Runs one `rotmd` invocation; args excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rot::cli
