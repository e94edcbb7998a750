#include "pamlab/cli.hpp"

int main(int argc, char** argv) { return pamlab::cli::run(argc, argv); }
