#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ocfusion::tools {

/// Entry point of the `ocfusion` tool. Returns the process exit code:
/// 0 success, 2 usage error, 3 data error, 4 contract violation.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

/// Convenience overload; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace ocfusion::tools
