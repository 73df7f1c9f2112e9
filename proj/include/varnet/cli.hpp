#pragma once

#include <iosfwd>

namespace varnet::cli {

enum ExitCode : int {
    kOk = 0,
    kIoError = 1,
    kValidationError = 2,
    kAnalysisCondition = 3,
};

/// Entry point of the `varnet` tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace varnet::cli
