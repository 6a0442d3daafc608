#include "evroute/cli/app.hpp"

int main(int argc, char** argv) { return evroute::cli::run_cli(argc, argv); }
