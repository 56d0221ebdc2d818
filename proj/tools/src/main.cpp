#include <iostream>

#include "lipcmp_cli/cli.hpp"

int main(int argc, char** argv) { return lipcmp::cli::main_entry(argc, argv, std::cout, std::cerr); }
