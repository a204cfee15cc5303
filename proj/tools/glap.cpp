// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "glap/cli.hpp"

int main(int argc, char** argv) { return glap::run_cli(argc, argv, std::cout, std::cerr); }
