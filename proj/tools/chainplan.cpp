#include <iostream>
#include <string>
#include <vector>

#include "chainplan/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return chainplan::run_cli(args, std::cout, std::cerr);
}
