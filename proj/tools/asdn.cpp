#include "asdn/cli.hpp"

int main(int argc, char** argv) { return asdn::cli::run(argc, argv); }
