#include "idc/cli.hpp"

int main(int argc, char** argv) { return idc::cli_main(argc, argv); }
