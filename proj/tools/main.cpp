#include "cli.hpp"

int main(int argc, char** argv) { return nerp::cli::main(argc, argv); }
