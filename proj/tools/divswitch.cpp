#include "divswitch/cli.hpp"

int main(int argc, char** argv) { return divswitch::cli::run(argc, argv); }
