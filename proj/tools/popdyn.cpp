#include "popdyn/cli.hpp"

int main(int argc, char** argv) { return popdyn::cli::run_command(argc, argv); }
