#include <iostream>

#include "excon/harness.hpp"

int main(int argc, char** argv) { return excon::run_cli(argc, argv, std::cout, std::cerr); }
