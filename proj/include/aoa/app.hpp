#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace aoa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Parses argv (argv[0] is the program name) and runs one subcommand.
// Returns the process exit code; never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Built-in ablation rows as "label: key=value ..." lines, selected with
// --config-matrix default.
std::string default_ablation_matrix();

}  // namespace aoa::cli
