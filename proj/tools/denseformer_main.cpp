#include <iostream>
#include <string>
#include <vector>

#include "denseformer/cli.hpp"

int main(int argc, char** argv) {
  denseformer::configure_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return denseformer::run_cli(args, std::cout, std::cerr);
}
