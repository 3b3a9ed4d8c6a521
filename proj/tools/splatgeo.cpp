#include "splatgeo/cli.hpp"

int main(int argc, char** argv) { return splatgeo::run_cli(argc, argv); }
