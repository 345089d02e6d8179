// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/cli.hpp"

int main(int argc, char** argv) { return tse::cli::run(argc, argv); }
