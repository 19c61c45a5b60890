#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace amq::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNoGo = 2;

// Entry point behind the `amq` executable. `args` excludes the program
// name. Subcommands: gen, train, eval, sweep, monitor.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in);

int run(int argc, const char* const* argv);

}  // namespace amq::cli
