#include <iostream>

#include "xrl/cli.hpp"

int main(int argc, char** argv) { return xrl::run_cli(argc, argv, std::cout, std::cerr); }
