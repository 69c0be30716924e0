#pragma once

// The pmi-wsod command line: gen-data, train, eval, export-cam and
// inspect-embedding subcommands.

#include <iosfwd>
#include <string>
#include <vector>

namespace wsod::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

/// `args` excludes the program name. Never throws; failures map to exit
/// codes and a message on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wsod::cli
