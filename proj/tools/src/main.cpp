#include <iostream>

#include "latentir/cli.hpp"

int main(int argc, char** argv) { return latentir::cli::run(argc, argv, std::cout, std::cerr); }
