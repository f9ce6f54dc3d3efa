// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace effdet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitMissingInput = 3;
inline constexpr int kExitRuntime = 4;

inline constexpr const char* kOutputRootEnv = "EFFDET_OUTPUT_ROOT";

/// Runs one command. `args` excludes the program name. Results go to `out`;
/// progress and, on failure, a one-line JSON error go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace effdet
