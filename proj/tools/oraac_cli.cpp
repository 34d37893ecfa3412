#include <iostream>

#include "oraac/harness.hpp"

int main(int argc, char** argv) { return oraac::run_cli(argc, argv, std::cout, std::cerr); }
