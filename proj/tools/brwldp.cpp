#include "brwldp/cli.hpp"

int main(int argc, char** argv) { return brwldp::cli::main(argc, argv); }
