#include "freezehpo/harness/cli.hpp"

int main(int argc, char** argv) { return freezehpo::cli::run(argc, argv); }
