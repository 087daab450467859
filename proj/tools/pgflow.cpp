#include <iostream>

#include "pgflow/cli.hpp"

int main(int argc, char** argv) { return pgflow::run_cli(argc, argv, std::cout, std::cerr); }
