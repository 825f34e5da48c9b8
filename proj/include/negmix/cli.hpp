#pragma once

#include <string>
#include <vector>

namespace negmix {

// Command-line entry point. Subcommands: train, eval, split, synth, ablate,
// sweep, verify-theorems. Returns the process exit code: 0 on success, 1 on
// any usage or validation error, 2 when verify-theorems observes a sign
// failure.
int run(int argc, const char* const* argv);

// Convenience overload for tests: `args` excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace negmix
