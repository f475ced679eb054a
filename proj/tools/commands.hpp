#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cssim::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kOk = 0,
  kValidationFailure = 1,
  kIoFailure = 2,
  kDivergence = 3,
};

/// Runs one `cssim` invocation; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cssim::cli
