#include "cli.hpp"

int main(int argc, char** argv) { return dosebound::cli::run(argc, argv); }
