#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qtitle {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int data = 2;
}  // namespace exit_code

/// args excludes the program name. Machine output goes to `out`, diagnostics to `err`.
/// `in` feeds `query` when no --code-file is given.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace qtitle
