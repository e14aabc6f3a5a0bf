#include <dyngame/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return dyngame::cli::run(argc, argv, std::cout, std::cerr); }
