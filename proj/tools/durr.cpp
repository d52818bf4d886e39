#include "durr/cli.hpp"

int main(int argc, char** argv) { return durr::cli_run(argc, argv); }
