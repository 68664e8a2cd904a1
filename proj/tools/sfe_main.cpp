#include <iostream>
#include <string>
#include <vector>

#include "sfe/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return sfe::cli::run_cli(args, std::cout, std::cerr);
}
