#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace arrayloc::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalidConfig = 2,
  kExitDataError = 3,
};

/// Runs one `arrayloc` invocation. `args[0]` is the program name. A
/// `--config FILE` argument names a JSON object whose entries are applied
/// after the command-line flags, so the file wins over flags.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Named calibration subsets: table = 1-6, chair = 7-11, all = 1-11, or a
/// comma-separated id list.
std::vector<int> parse_subset(const std::string& spec);

}  // namespace arrayloc::cli
