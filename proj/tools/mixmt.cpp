// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "mixmt/cli.hpp"

int main(int argc, char** argv) { return mixmt::cli::run(argc, argv, std::cout, std::cerr); }
