#include <iostream>

#include "enose/cli.hpp"

int main(int argc, char** argv) {
    return enose::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
