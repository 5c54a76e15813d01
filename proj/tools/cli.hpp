#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace deft::cli {

enum ExitCode : int {
  kOk = 0,
  kVerificationFailed = 1,
  kUsage = 2,
  kIo = 3,
};

/// Runs the `deft` command line. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deft::cli
