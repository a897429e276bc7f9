#include <iostream>

#include "tiltdid/cli.hpp"

int main(int argc, char** argv) { return tiltdid::run_cli(argc, argv, std::cout, std::cerr); }
