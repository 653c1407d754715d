#include "cli.hpp"

int main(int argc, char** argv) { return klmdp::cli::run(argc, argv); }
