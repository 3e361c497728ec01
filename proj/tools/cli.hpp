#pragma once

#include <iostream>

namespace ttgp::cli {

enum ExitCode : int { Ok = 0, Other = 1, Usage = 2, Io = 3, Parse = 4, Stage = 5 };

/// Parses argv (argv[0] is the program name) and runs one subcommand. Errors
/// are written to `err` as a single JSON object.
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace ttgp::cli
