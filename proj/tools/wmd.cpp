// SPDX-License-Identifier: Apache-2.0
#include "wmd/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return wmd::cli::run_cli(argc, argv, std::cout, std::cerr); }
