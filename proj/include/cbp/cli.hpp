#pragma once

#include <ostream>

namespace cbp {

/// Entry point of the cbpabc tool. Returns the process exit code:
/// 0 success, 1 configuration error, 2 data error, 3 budget exceeded,
/// 4 any other failure. Errors are also reported as one JSON line on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace cbp
