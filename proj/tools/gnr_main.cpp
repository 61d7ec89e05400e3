#include <iostream>

#include "gnr/commands.hpp"

int main(int argc, char** argv) { return gnr::cli::main(argc, argv, std::cout, std::cerr); }
