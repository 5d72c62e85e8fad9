#ifndef RSVD_CLI_HPP
#define RSVD_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace rsvd::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInputError = 2,
  kNotConverged = 3,
  kMisuse = 4,
};

/// Entry point shared by the rsvd executable and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rsvd::cli

#endif  // RSVD_CLI_HPP
