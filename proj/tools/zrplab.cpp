#include "zrplab/cli.hpp"

int main(int argc, char** argv) { return zrp::cli::main(argc, argv); }
