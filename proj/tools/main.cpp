#include <iostream>

#include "pauction/cli.hpp"

int main(int argc, char** argv) { return pauction::cli::run(argc, argv, std::cout, std::cerr); }
