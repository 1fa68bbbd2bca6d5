#include "driftcast/cli.hpp"

int main(int argc, char** argv) { return driftcast::cli::run(argc, argv); }
