#include "failscope/cli.hpp"

int main(int argc, char** argv) { return failscope::cli::run(argc, argv); }
