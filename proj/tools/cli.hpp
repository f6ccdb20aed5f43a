#pragma once

#include <ostream>

namespace sandpile::cli {

enum ExitCode : int { kOk = 0, kAssertionFailed = 1, kUsage = 2, kRefused = 3 };

/// Entry point of the `sandpile` tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sandpile::cli
