#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "n2/data/volume.hpp"

namespace n2 {

struct ManifestEntry {
  std::string subject_id;
  std::string path;   // volume directory, relative to the manifest's folder
  std::string split;  // "train", "val" or "test"
};

/// Dataset listing stored as JSON:
/// {"version": 1, "class_names": [...], "subjects": [{"id", "path", "split"}]}
struct Manifest {
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> subjects;
  std::filesystem::path base_dir;  // set on load

  std::vector<ManifestEntry> split(const std::string& name) const;
  /// Loads every volume of a split, in manifest order.
  std::vector<VolumeRecord> load_split(const std::string& name) const;
};

void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
/// Throws DataError for unreadable files, unknown splits or duplicate ids.
Manifest load_manifest(const std::filesystem::path& path);

/// Deterministic split of n subjects: the last round(n * test_fraction) go
/// to test, the round(n * val_fraction) before them to val, the rest train.
std::vector<std::string> assign_splits(std::size_t n, double val_fraction, double test_fraction);

}  // namespace n2
