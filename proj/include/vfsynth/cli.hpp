#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vfsynth {

/// Parses argv-style arguments (without the program name) and runs the
/// subcommand. Returns the process exit code: 0 on success, 1 when the
/// command's contract failed, 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vfsynth
