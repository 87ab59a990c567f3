#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace n2::cli {

/// Parses a config file: JSON when the extension is .json, TOML otherwise.
/// Throws ConfigError naming the file on syntax errors.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Recursively overlays `overlay` onto `base`. Keys absent from `base` are
/// rejected with their dotted path; so are values whose JSON type differs
/// from the default (numbers interconvert; a null default accepts anything).
void merge_config(nlohmann::json& base, const nlohmann::json& overlay, const std::string& prefix = "");

/// Applies one "dotted.key=value" override. The value is read as JSON when
/// it parses, else as a plain string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Every leaf key as "dotted.key (default)" lines, for --help.
std::vector<std::string> describe_keys(const nlohmann::json& defaults);

}  // namespace n2::cli
