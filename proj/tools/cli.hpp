#ifndef SMCDESIGN_TOOLS_CLI_HPP_
#define SMCDESIGN_TOOLS_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace smcdesign {

// `args` excludes the program name. Returns the process exit status.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace smcdesign

#endif  // SMCDESIGN_TOOLS_CLI_HPP_
