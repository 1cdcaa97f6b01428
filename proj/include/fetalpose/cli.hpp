#pragma once

#include <string>
#include <vector>

namespace fetalpose {

// Entry point shared by the binary and the tests. Exit codes: 0 success,
// 2 config error, 3 data format error, 4 runtime error.
int run_cli(const std::vector<std::string>& args);

}  // namespace fetalpose
