#include <iostream>

#include "s2h/cli.hpp"

int main(int argc, char** argv) { return s2h::run_cli(argc, argv, std::cout, std::cerr); }
