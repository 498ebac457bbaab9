#include <iostream>

#include "cdmpo/run.hpp"

int main(int argc, char** argv) { return cdmpo::run_cli(argc, argv, std::cout, std::cerr); }
