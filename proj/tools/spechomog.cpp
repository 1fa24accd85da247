#include "spechomog/experiments.hpp"

int main(int argc, char** argv) { return spechomog::cli::run_cli(argc, argv); }
