#include <iostream>

#include "ptnet/cli.hpp"

int main(int argc, char** argv) { return ptnet::run_cli(argc, argv, std::cout, std::cerr); }
