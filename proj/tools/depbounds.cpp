#include "depbounds/cli.hpp"

int main(int argc, char** argv) { return depbounds::cli::dispatch(argc, argv); }
