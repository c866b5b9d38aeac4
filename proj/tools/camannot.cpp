#include <iostream>

#include "camannot/cli.hpp"

int main(int argc, char** argv) {
  return camannot::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
