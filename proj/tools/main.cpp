#include "drml/cli.hpp"

int main(int argc, char** argv) { return drml::run_cli(argc, argv); }
