#pragma once

#include <string>
#include <vector>

namespace drml {

/// Command-line entry point (quadtable / simulate / fit / bench).
/// Exit codes: 0 success (fit: converged), 2 clean non-convergence from
/// fit, 1 usage or data error.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

}  // namespace drml
