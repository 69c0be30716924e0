#include <iostream>
#include <string>
#include <vector>

#include "wsod/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return wsod::cli::run(args, std::cout, std::cerr);
}
