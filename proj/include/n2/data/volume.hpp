#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace n2 {

/// A CT-like volume with per-class binary masks.
///
/// image is (Z, H, W) row-major; masks is (C, Z, H, W) with values 0/1.
struct VolumeRecord {
  std::string subject_id;
  std::int64_t depth = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<double> image;
  std::vector<std::uint8_t> masks;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // (z, y, x) in mm
  std::vector<std::string> class_names;
  /// Free-form provenance (generator spec and seed, source series, ...).
  nlohmann::json source = nlohmann::json::object();

  std::int64_t num_classes() const { return static_cast<std::int64_t>(class_names.size()); }
  std::int64_t slice_size() const { return height * width; }

  double& voxel(std::int64_t z, std::int64_t y, std::int64_t x) {
    return image[static_cast<std::size_t>((z * height + y) * width + x)];
  }
  double voxel(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return image[static_cast<std::size_t>((z * height + y) * width + x)];
  }
  std::uint8_t& mask(std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) {
    return masks[static_cast<std::size_t>(((c * depth + z) * height + y) * width + x)];
  }
  std::uint8_t mask(std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) const {
    return masks[static_cast<std::size_t>(((c * depth + z) * height + y) * width + x)];
  }
  /// True when class c has any positive voxel on slice z.
  bool present(std::int64_t c, std::int64_t z) const;

  /// Throws DataError on size disagreement or non-binary masks.
  void validate() const;
};

/// Writes `dir/image.f32` (little-endian float32, Z*H*W), `dir/masks.u8`
/// (C*Z*H*W) and `dir/volume.json`. Image values are narrowed to float.
void save_volume(const std::filesystem::path& dir, const VolumeRecord& volume);
VolumeRecord load_volume(const std::filesystem::path& dir);

/// Per-slice resampling to (out_h, out_w): bilinear (half-pixel centers) for
/// the image, nearest neighbour for masks. In-plane spacing is scaled.
VolumeRecord resample_slices(const VolumeRecord& volume, std::int64_t out_h, std::int64_t out_w);

/// Keeps the named classes, in the given order. Missing names yield an empty
/// channel and are appended to `missing` when given.
VolumeRecord select_classes(const VolumeRecord& volume, const std::vector<std::string>& names,
                            std::vector<std::string>* missing = nullptr);

}  // namespace n2
