#include <iostream>
#include <string>
#include <vector>

#include "vlmpar/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return vlmpar::run_cli(args, std::cout, std::cerr);
}
