#include <iostream>

#include "volenc/cli.hpp"

int main(int argc, char** argv) {
    return volenc::run_cli(argc, argv, std::cout, std::cerr);
}
