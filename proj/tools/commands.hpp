#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cgrpo::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kRuntime = 2;
inline constexpr int kDegenerate = 3;

// Environment variable naming the parent directory for `train` runs when
// --out-dir is not given.
inline constexpr const char* kRunDirEnv = "CGRPO_RUN_DIR";

// Runs the command line `args` (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace cgrpo::cli
