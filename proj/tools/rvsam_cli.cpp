// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/cli.hpp"

int main(int argc, char** argv) { return rvsam::run_cli(argc, argv); }
