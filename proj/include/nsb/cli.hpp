#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nsb::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_validation = 1,
    exit_runtime = 2,
    exit_partial = 3,
};

/// Entry point of the `nsb` command. Data goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace nsb::cli
