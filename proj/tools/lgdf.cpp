#include <string>
#include <vector>

#include "lgdf/cli/commands.hpp"

int main(int argc, char** argv) { return lgdf::cli::run_cli(std::vector<std::string>(argv, argv + argc)); }
