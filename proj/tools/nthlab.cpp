#include "nthlab/cli.hpp"

int main(int argc, char** argv) { return nthlab::cli_main(argc, argv); }
