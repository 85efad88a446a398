#include <iostream>
#include <string>
#include <vector>

#include "s3c/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return s3c::run_cli(args, std::cout, std::cerr);
}
