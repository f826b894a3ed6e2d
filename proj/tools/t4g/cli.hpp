#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace t4g::cli {

/// Runs one t4g command. `args` excludes the program name. Returns the
/// process exit code; failures print one JSON error line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace t4g::cli
