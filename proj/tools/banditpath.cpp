#include "banditpath/cli.hpp"

int main(int argc, char** argv) { return banditpath::cli::run(argc, argv); }
