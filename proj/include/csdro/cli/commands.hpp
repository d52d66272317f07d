#pragma once

#include <string>
#include <vector>

namespace csdro::cli {

// Entry point of the `csdro` executable. Returns 0 on success, 1 on a
// validation error and 2 on a runtime failure.
int run_cli(int argc, const char* const* argv);

// Same with the arguments after the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace csdro::cli
