#include <iostream>

#include "reform/cli/cli.hpp"

int main(int argc, char** argv) { return reform::cli::run_cli(argc, argv, std::cout, std::cerr); }
