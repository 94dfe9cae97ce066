#include "diffctl/cli/commands.hpp"

int main(int argc, char** argv) { return diffctl::cli::run(argc, argv); }
