#pragma once

#include <iosfwd>

namespace hiceaa {

/// Entry point behind the `hiceaa` executable. Subcommands: serve, aggregate,
/// fit, predict, plan, camera, simulate, export, baseline.
///
/// Exit codes: 0 success, 1 domain or I/O error, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hiceaa
