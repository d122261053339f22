#include <iostream>

#include "nsb/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv, argv + argc);
    return nsb::cli::run(args, std::cout, std::cerr);
}
