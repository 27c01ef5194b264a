#include <iostream>

#include "ehvm/cli.hpp"

int main(int argc, char** argv) { return ehvm::cli::main(argc, argv, std::cout, std::cerr); }
