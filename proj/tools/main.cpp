#include "../src/cli.hpp"

int main(int argc, char** argv) { return tvase::cli::run(argc, argv); }
