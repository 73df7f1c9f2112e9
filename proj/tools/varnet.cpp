#include <iostream>

#include "varnet/cli.hpp"

int main(int argc, char** argv) { return varnet::cli::run(argc, argv, std::cout, std::cerr); }
