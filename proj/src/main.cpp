#include <iostream>

#include "eqq/cli.hpp"

int main(int argc, char** argv) { return eqq::cli::main(argc, argv, std::cout, std::cerr); }
