// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace glap {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
};

/// Entry point for the `glap` tool: train, eval-retrieval, eval-zeroshot,
/// gradcheck and sample-audit. Every subcommand writes <out>/run.json with its
/// fully resolved options; `--config run.json` replays them (explicit flags win).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace glap
