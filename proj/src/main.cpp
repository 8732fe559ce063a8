// SPDX-License-Identifier: Apache-2.0
#include <string>
#include <vector>

#include "gshift/cli.hpp"

int main(int argc, char** argv) { return gshift::cli::run(std::vector<std::string>(argv + 1, argv + argc)); }
