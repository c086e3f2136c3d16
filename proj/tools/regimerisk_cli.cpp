#include <iostream>

#include "regimerisk/cli_app.hpp"

int main(int argc, char** argv) { return regimerisk::run_cli(argc, argv, std::cout, std::cerr); }
