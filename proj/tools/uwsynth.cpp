#include <iostream>

#include "uwsynth/cli.hpp"

int main(int argc, char** argv) { return uwsynth::run_cli(argc, argv, std::cout, std::cerr); }
