#pragma once

#include <stdexcept>
#include <string>

namespace discap {

// Bad inputs: malformed arguments, violated preconditions, inconsistent data.
// The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem and wire-format failures. The CLI maps these to exit code 2.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace discap
