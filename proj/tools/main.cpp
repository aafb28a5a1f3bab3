#include "targetamp/cli.hpp"

int main(int argc, char** argv) { return targetamp::run_cli(argc, argv); }
