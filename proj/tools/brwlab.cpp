#include "brw/cli.hpp"

int main(int argc, char** argv) { return brw::cli::run(argc, argv); }
