#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace livseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

// Default for --jobs when the flag is absent.
inline constexpr const char *kJobsEnvVar = "LIVSEG_JOBS";

// Entry point behind the `livseg` executable. args[0] is the program name.
// Machine-readable output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace livseg::cli
