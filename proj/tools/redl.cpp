#include "redl/cli.hpp"

int main(int argc, char** argv) { return redl::cli_main(argc, argv); }
