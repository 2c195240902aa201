#include "qapm/cli.hpp"

int main(int argc, char** argv) { return qapm::cli::run(argc, argv); }
