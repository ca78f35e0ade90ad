#include <iostream>

#include "qtt/cli/app.hpp"

int main(int argc, char** argv) { return qtt::cli::run(argc, argv, std::cout, std::cerr); }
