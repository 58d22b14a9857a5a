#include <string>
#include <vector>

#include "discap/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return discap::cli_dispatch(args);
}
