#include "qrchain/cli.hpp"

int main(int argc, char** argv) { return qrchain::cli::run(argc, argv); }
