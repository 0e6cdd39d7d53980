#include <iostream>

#include "pamda/cli/commands.hpp"

int main(int argc, char** argv) { return pamda::cli::run(argc, argv, std::cout, std::cerr); }
