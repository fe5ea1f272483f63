#pragma once

#include <iosfwd>

namespace ebt::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kNumericalFailure = 2,
  kAssertFailure = 3,
};

/// Entry point shared by the `ebt` executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ebt::cli
