#ifndef DOSEBOUND_TOOLS_CLI_HPP_
#define DOSEBOUND_TOOLS_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace dosebound::cli {

/// Runs one subcommand. Exit codes: 0 success, 1 runtime or verification
/// failure, 2 usage or configuration error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// "2.5", "log5", "log(5)", "sqrt(2)" -> value.
double parse_param(const std::string& text);

}  // namespace dosebound::cli

#endif  // DOSEBOUND_TOOLS_CLI_HPP_
