#include "fedminimax/cli.hpp"

int main(int argc, char** argv) { return fedminimax::cli_main(argc, argv); }
