#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace failscope::cli {

// Exit status: 0 success, 1 a stage failed (diagnostic "error [stage]: ..."
// on `err`), 2 bad flags.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace failscope::cli
