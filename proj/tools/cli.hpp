// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace panoforge::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kIoError = 3,
  kDatasetError = 4,
};

/// Runs one subcommand; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses a comma-separated lambda list, dropping repeats (with a warning on
/// `err`). Throws ConfigError for empty, non-numeric or negative entries.
std::vector<double> parse_lambda_list(const std::string& text, std::ostream& err);

}  // namespace panoforge::cli
