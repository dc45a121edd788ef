#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cmis::cli {

enum ExitCode : int { ok = 0, runtime_failure = 1, usage = 2, bad_config = 3 };

/// Runs one command. `args` excludes the program name. Errors are reported
/// on `err` as one line: `error code=<n> kind=<kind> message="<text>"`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Version string baked in at configure time.
std::string git_describe();

}  // namespace cmis::cli
