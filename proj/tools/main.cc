#include <iostream>

#include "cli.h"

int main(int argc, char** argv) {
  return ocfusion::tools::run(argc, argv, std::cout, std::cerr);
}
