#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fedminimax {

/// Exit codes: 0 success, 1 usage or input error, 2 failed acceptance suite
/// or verification check.
int cli_main(int argc, char** argv);
int cli_main(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err);

}  // namespace fedminimax
