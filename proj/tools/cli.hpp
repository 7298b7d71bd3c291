#pragma once

#include <ostream>

namespace eigendrift::cli {

enum ExitCode { kOk = 0, kUsage = 1, kNumerical = 2, kCrossCheck = 3 };

/// Entry point shared by the executable and the tests. Data goes to the
/// --out file (written atomically) or to `out`; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace eigendrift::cli
