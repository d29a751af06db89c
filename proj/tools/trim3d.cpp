#include "cli_app.hpp"

int main(int argc, char** argv) { return trim3d::cli::main_entry(std::vector<std::string>(argv, argv + argc)); }
