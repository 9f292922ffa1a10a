#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ctxforest::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitValidation = 4;

/// Runs one invocation; args[0] is the program name. Never throws: errors
/// are reported on `err` and mapped to an exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctxforest::cli
