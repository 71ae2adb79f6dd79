#include "brwre/cli.hpp"

int main(int argc, char** argv) { return brwre::run_cli(argc, argv); }
