#include "bvm_cli.hpp"

int main(int argc, char** argv) { return bvm::cli::main(argc, argv); }
