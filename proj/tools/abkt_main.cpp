#include "abkt/cli.hpp"

int main(int argc, char** argv) { return abkt::run_cli(argc, argv); }
