#include <iostream>
#include <string>
#include <vector>

#include "ducat/harness/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ducat::harness::run_cli(args, std::cout, std::cerr);
}
