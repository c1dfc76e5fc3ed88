#pragma once

#include <string>
#include <vector>

namespace lmpanel::cli {

// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
int run(const std::vector<std::string>& args);

}  // namespace lmpanel::cli
