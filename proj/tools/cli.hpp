#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fsdm::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kNumeric = 3,
  kCheckpoint = 4,
};

// Runs the `fsdm` command line. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fsdm::cli
