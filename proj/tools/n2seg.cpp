#include <iostream>
#include <string>
#include <vector>

#include "n2/cli/app.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return n2::cli::run(args, std::cout, std::cerr);
}
