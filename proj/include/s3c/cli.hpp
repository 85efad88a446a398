#ifndef S3C_CLI_HPP
#define S3C_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace s3c {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitDivergence = 2 };

/// Entry point for the `s3c` tool. args excludes the program name. Errors
/// are reported on `err` as one machine-parseable line:
///   s3c: error code=<Code> message="<text>"
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace s3c

#endif  // S3C_CLI_HPP
