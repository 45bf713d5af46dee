#include "neufe/driver/cli.hpp"

int main(int argc, char** argv) { return neufe::driver::run_cli(argc, argv); }
