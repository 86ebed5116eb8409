#include <iostream>

#include "cbi/cli.hpp"

int main(int argc, char** argv) {
    return cbi::cli::run(argc, argv, std::cout, std::cerr);
}
