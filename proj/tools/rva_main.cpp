#include <iostream>

#include "rva/cli.hpp"

int main(int argc, char** argv) { return rva::run_cli(argc, argv, std::cout, std::cerr); }
