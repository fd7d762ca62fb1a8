#pragma once

#include <string>
#include <vector>

namespace ip {

// The full command-line surface (synth, featurize, train, fuse, eval,
// predict), callable in-process. Returns the process exit code; runtime
// failures print {"error": ...} to stderr and return 1.
int run_cli(const std::vector<std::string>& args);

}  // namespace ip
