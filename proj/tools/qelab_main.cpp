#include "qelab/cli.hpp"

int main(int argc, char** argv) { return qelab::runner::cli_main(argc, argv); }
