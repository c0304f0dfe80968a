#include "usonic/cli/cli.hpp"

int main(int argc, char** argv) { return usonic::cli::run_main(argc, argv); }
