#pragma once

#include <ostream>

namespace pauction::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitInfeasible = 4;
inline constexpr int kExitIo = 5;

/// Entry point of the command-line tool. Normal output goes to `out`,
/// diagnostics to `err`; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pauction::cli
