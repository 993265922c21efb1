#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ksc::cli {

/// Parses the arguments and runs one subcommand. Returns the process exit code;
/// errors are reported on `err` rather than thrown.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ksc::cli
