#include "pyrseg/cli.hpp"

int main(int argc, char** argv) { return pyrseg::cli::run(argc, argv); }
