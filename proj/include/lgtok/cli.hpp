#pragma once

// Command-line front end. Exit codes:
//   0  success
//   2  usage: unknown command or flag, bad edit-mask spec, occupied --out
//   3  config: bad key or value, incompatible checkpoints, shape or bounds
//   4  data: io, format, version, truncation, counts, sample size
//   5  numeric: non-finite values
//   1  anything unexpected
// Failures print one line "error: <category>: <message>" to stderr.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lgtok/error.hpp"

namespace lgtok::cli {

inline constexpr std::string_view kVersion = "lgtok 0.1.0";

int exit_code(ErrorKind kind);

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lgtok::cli
