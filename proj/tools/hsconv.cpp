#include "hsconv/cli.hpp"

int main(int argc, char** argv) { return hsconv::cli::run(argc, argv); }
