#include <iostream>

#include "shiftex/cli.hpp"

int main(int argc, char** argv) { return shiftex::run_cli(argc, argv, std::cout, std::cerr); }
