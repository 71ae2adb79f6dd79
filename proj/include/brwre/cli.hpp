#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace brwre {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;  // malformed config or bad flags; nothing written
inline constexpr int kExitOverflow = 3;
inline constexpr int kExitInternal = 4;

/// Entry point of the `brwre` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace brwre
