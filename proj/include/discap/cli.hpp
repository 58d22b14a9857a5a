#pragma once

#include <string>
#include <vector>

namespace discap {

// Runs one command. args excludes the program name. Returns 0 on success,
// 1 on usage/validation errors, 2 on I/O errors.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace discap
