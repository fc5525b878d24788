#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace toxtrans::platform {

/// Entry point of the `toxtrans` command. `args[0]` is the program name.
/// Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace toxtrans::platform
