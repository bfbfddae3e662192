#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dualres::cli {

// Runs one CLI invocation (args exclude the program name) and returns the
// process exit code. Errors come out as a single line on err:
//   error: <kind>: <message>
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace dualres::cli
