#include "mccle/cli.hpp"

int main(int argc, char** argv) { return mccle::run_cli(argc, argv); }
