#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eoscount::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kPartialFailure = 2,
  kUsage = 64,
};

/// Runs one command line. `args[0]` is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eoscount::cli
