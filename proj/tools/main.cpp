#include "cli.hpp"

int main(int argc, char** argv) { return smcdesign::cli_main(argc, argv); }
