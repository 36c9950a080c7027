#include "cbp/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return cbp::run_cli(argc, argv, std::cout, std::cerr);
}
