#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace crashformer::cli {

/// Runs one command line (without the program name). Logs go to `err`.
/// Returns 0 on success, 1 on validation errors and usage problems, 2 on
/// runtime failures.
int run(const std::vector<std::string>& args, std::ostream& err);

}  // namespace crashformer::cli
