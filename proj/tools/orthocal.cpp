#include <iostream>

#include "orthocal/cli.hpp"

int main(int argc, char** argv) { return orthocal::cli::run(argc, argv, std::cout, std::cerr); }
