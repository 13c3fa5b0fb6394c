/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "cli.hpp"

int main(int argc, char** argv) { return relfk::cli::run(argc, argv); }
