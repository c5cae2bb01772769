// Command-line front end shared by the `hti` executable and the tests.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hti {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hti
