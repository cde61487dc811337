#include <iostream>
#include <string>
#include <vector>

#include "aoa/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return aoa::cli::run(args, std::cout, std::cerr);
}
