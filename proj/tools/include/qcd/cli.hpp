#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qcd::cli {

enum ExitCode : int { ok = 0, validation = 1, warning = 2 };

/// Runs the `qcd` command line. `args` excludes the program name. Results go to
/// `out` unless an output path is set; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qcd::cli
