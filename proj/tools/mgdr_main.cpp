#include <mgdr/cli.hpp>

int main(int argc, char** argv) { return mgdr::cli::run(argc, argv); }
