#include <iostream>

#include "rot/cli.hpp"

int main(int argc, char** argv) {
  return rot::cli::run_command({argv + 1, argv + argc}, std::cout, std::cerr);
}
