#include "cli.hpp"

int main(int argc, char** argv) { return stcp::cli::run(argc, argv); }
