#include <iostream>

#include "bipnet/cli.hpp"

int main(int argc, char** argv) {
    return bipnet::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
