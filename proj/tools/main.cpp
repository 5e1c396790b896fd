#include "cli.hpp"

int main(int argc, char** argv) { return ffc::cli::run(argc, argv); }
