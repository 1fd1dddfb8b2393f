#include "visage/cli.hpp"

int main(int argc, char** argv) { return visage::cli_run(argc, argv); }
