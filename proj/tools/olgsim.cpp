#include "olg/cli/commands.hpp"

int main(int argc, char** argv) { return olg::cli::run_cli(argc, argv); }
