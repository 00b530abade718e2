#pragma once

#include <map>
#include <string>
#include <vector>

namespace qops {

// Entry point behind the qops binary; args exclude the program name.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int run_cli(const std::vector<std::string>& args);

// key=value lines; '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> read_config_file(const std::string& path);

}  // namespace qops
