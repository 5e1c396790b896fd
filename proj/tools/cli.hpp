#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ffc::cli {

/// Runs one invocation. `args` excludes the program name. Returns the process
/// exit code: 0 success, 2 usage or config error, 3 data error, 4 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace ffc::cli
