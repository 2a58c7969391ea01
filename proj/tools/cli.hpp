#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ggp::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kNumericalError = 2, kCheckFailed = 3 };

/// Runs one command line (without the program name). Results go to `out`,
/// a JSON error object to `err`. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ggp::cli
