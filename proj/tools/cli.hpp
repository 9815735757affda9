#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ewm::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNumericError = 4 };

// Runs one command line (args exclude the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace ewm::cli
