#include "decaf/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return decaf::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
