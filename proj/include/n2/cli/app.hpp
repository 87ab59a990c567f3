#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace n2::cli {

inline constexpr const char* kToolName = "n2seg";
inline constexpr const char* kToolVersion = "0.1.0";
/// Environment variable naming the default output root ("runs" when unset).
inline constexpr const char* kOutputRootEnv = "N2_OUTPUT_ROOT";

/// Every config key with its default. Training keys sit at the top level;
/// the other subcommands read their own sections.
nlohmann::json default_config();

/// Runs one invocation; `args` excludes the program name. Returns 0 on
/// success, 1 on usage or config errors, 2 on data errors and 3 on training
/// or inference errors. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace n2::cli
