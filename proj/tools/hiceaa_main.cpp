#include <iostream>

#include "hiceaa/cli.hpp"

int main(int argc, char** argv) { return hiceaa::run_cli(argc, argv, std::cout, std::cerr); }
