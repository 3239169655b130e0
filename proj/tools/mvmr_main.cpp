#include "mvmr/cli.hpp"

int main(int argc, char** argv) { return mvmr::run_cli(argc, argv); }
