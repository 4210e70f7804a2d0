#pragma once

#include <string>
#include <vector>

namespace ddmnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Runs one invocation; args excludes the program name. Never throws.
int run(const std::vector<std::string>& args);

}  // namespace ddmnet::cli
