#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2/model/network.hpp"

namespace n2 {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Single-file container: magic, version tag, JSON metadata, then named
/// float64 tensors, all little-endian.
///
///   "N2CKPT\0\0" | u32 version | u64 len | JSON | u64 count |
///   count x (u32 len | name | u32 ndim | i64 dims[ndim] | f64 data[])
struct Archive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
/// Throws DataError for unreadable files, bad magic or an unknown version.
Archive read_archive(const std::filesystem::path& path);

/// Stores the model config under meta["model"], `extra` under meta["extra"]
/// and every parameter as "param/<name>".
Archive network_archive(const N2Network& net, const nlohmann::json& extra = {});
void save_checkpoint(const std::filesystem::path& path, const N2Network& net,
                     const nlohmann::json& extra = {});

/// Rebuilds the network from meta["model"] and loads every parameter.
/// Missing, unexpected, or shape-mismatched tensors are rejected.
std::unique_ptr<N2Network> network_from_archive(const Archive& archive);
std::unique_ptr<N2Network> load_checkpoint(const std::filesystem::path& path,
                                           nlohmann::json* extra = nullptr);

}  // namespace n2
