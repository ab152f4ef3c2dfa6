#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace air::cli {

/// Exit codes of the `air` binary.
enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kManifest = 3,
    kInvalidInput = 4,
    kRuntime = 5,
    kSelftestFailed = 6,
};

/// Runs the command line `args` (program name first). Progress goes to
/// `out`; a failure prints exactly one line `error: <code>: <message>` to
/// `err` and returns a nonzero exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace air::cli
