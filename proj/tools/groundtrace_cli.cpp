#include <iostream>
#include <string>
#include <vector>

#include "groundtrace/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return groundtrace::run_cli(args, std::cout, std::cerr);
}
