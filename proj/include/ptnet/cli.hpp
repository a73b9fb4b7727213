#pragma once

#include <iosfwd>

namespace ptnet {

// Entry point of the `ptnet` tool: degrade, synth, train, infer, eval, gradcheck, info.
// Returns 0 on success, 1 on usage or configuration errors, 2 on runtime failures.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ptnet
