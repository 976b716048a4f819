#include <iostream>

#include "shiftzoo_cli/cli.hpp"

int main(int argc, char** argv) {
  return shiftzoo::cli::run(argc, argv, std::cout, std::cerr);
}
