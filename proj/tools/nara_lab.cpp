#include "nara/cli.hpp"

int main(int argc, char** argv) { return nara::cli::run(argc, argv); }
