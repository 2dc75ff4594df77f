#pragma once

#include <iosfwd>

namespace volenc {

/// Entry point of the `volenc` tool. Returns 0 on success, 1 on invalid
/// input (bad flags, missing or malformed files, grid mismatch) and 2 on any
/// other failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace volenc
