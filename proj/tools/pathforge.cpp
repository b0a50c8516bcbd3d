#include "pathforge/cli.hpp"

int main(int argc, char** argv) { return pathforge::cli::run(argc, argv); }
