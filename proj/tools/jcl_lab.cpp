#include "jcl/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return jcl::cli::run(argc, argv, std::cout, std::cerr); }
