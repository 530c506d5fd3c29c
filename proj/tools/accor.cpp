#include "accor/cli.hpp"

int main(int argc, char** argv) { return accor::cli::run(argc, argv); }
