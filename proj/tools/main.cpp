#include "mawsd/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return mawsd::cli::run(argc, argv, std::cout, std::cerr);
}
