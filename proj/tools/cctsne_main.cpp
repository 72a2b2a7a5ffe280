#include "cctsne/cli.hpp"

int main(int argc, char** argv) { return cctsne::run_cli(argc, argv); }
