#include "amq/cli.hpp"

int main(int argc, char** argv) { return amq::cli::run(argc, argv); }
