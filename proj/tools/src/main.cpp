#include <iostream>

#include "scmm_cli/cli.hpp"

int main(int argc, char** argv) { return scmm::cli::dispatch(argc, argv, std::cout, std::cerr); }
