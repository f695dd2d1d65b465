#include "cli.hpp"

int main(int argc, char** argv) { return tolcal::cli::main(argc, argv); }
