// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace avsep {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitRecordErrors = 1,  // ran to completion but produced error records
  kExitUsage = 2,         // bad arguments, config, or unreadable input
};

/// Runs the command line. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

}  // namespace avsep
