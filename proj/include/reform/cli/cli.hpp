#pragma once

#include <iosfwd>

namespace reform::cli {

// Entry point of the `reform` binary. Never throws; failures are printed to
// `err` and mapped to exit codes by category.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace reform::cli
