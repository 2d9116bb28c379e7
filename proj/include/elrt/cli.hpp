#pragma once

#include <iosfwd>

namespace elrt {

/// Entry point of the elrt command-line tool. Returns 0 on success, 1 on a runtime failure
/// and 2 on a usage error (unknown flag, missing argument).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace elrt
