#include <iostream>

#include "itgan/cli.hpp"

int main(int argc, char** argv) { return itgan::run_cli(argc, argv, std::cout, std::cerr); }
