#include <iostream>

#include "elrt/cli.hpp"

int main(int argc, char** argv) { return elrt::run_cli(argc, argv, std::cout, std::cerr); }
