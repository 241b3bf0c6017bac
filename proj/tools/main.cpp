#include "cli.hpp"

int main(int argc, char** argv) { return altruist::cli::run(argc, argv); }
