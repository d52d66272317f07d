#include "csdro/cli/commands.hpp"

int main(int argc, char** argv) { return csdro::cli::run_cli(argc, argv); }
