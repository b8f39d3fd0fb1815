#include "surcol/cli.hpp"

int main(int argc, char** argv) { return surcol::cli_main(argc, argv); }
