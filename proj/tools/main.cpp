#include "lithohod/cli.hpp"

int main(int argc, char** argv) { return lithohod::cli::run(argc, argv); }
