#include <iostream>
#include <string>
#include <vector>

#include "livseg/cli.hpp"

int main(int argc, char **argv) {
    std::vector<std::string> args(argv, argv + argc);
    return livseg::cli::run(args, std::cout, std::cerr);
}
