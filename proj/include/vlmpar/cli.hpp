#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vlmpar {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

/// Entry point shared by the vlmpar binary and the tests. `args[0]` is the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vlmpar
