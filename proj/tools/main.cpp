// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli/cli.hpp"

int main(int argc, char** argv) { return realism::cli::run_cli(argc, argv, std::cout, std::cerr); }
