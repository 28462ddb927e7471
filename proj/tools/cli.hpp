#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gsan::cli {

// Exit statuses.
inline constexpr int exit_ok = 0;
inline constexpr int exit_runtime = 1;
inline constexpr int exit_config = 2;
inline constexpr int exit_io = 3;

// Runs one `gsan` invocation. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gsan::cli
