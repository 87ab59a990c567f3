#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2/data/volume.hpp"
#include "n2/tensor.hpp"

namespace n2 {

/// One axial slice ready for the network.
struct SliceSample {
  std::string subject_id;
  std::int64_t slice_index = 0;
  std::vector<Real> image;           // (1, H, W)
  std::vector<Real> prev_mask;       // (C, H, W), previous-slice context
  std::vector<Real> gt_mask;         // (C, H, W)
  std::vector<std::uint8_t> presence;  // (C)
  std::int64_t classes = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;

  std::int64_t plane() const { return height * width; }
  /// Sets presence from gt_mask.
  void refresh_presence();
};

enum class ContextSource { ground_truth, zeros };

/// One sample per slice in ascending z. Slice z gets the ground-truth masks
/// of slice z-1 (or zeros) as context; slice 0 always gets zeros. Images
/// are copied unnormalized.
std::vector<SliceSample> build_slice_samples(const VolumeRecord& volume, ContextSource source);

/// Dataset-level standardization statistics, fitted on min-max scaled
/// training slices.
struct NormStats {
  double mean = 0.0;
  double stddev = 1.0;
};

void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

/// In-place min-max scaling to [0, 1]; a constant slice maps to 0. Throws
/// DataError naming `where` on non-finite input.
void minmax_scale(std::span<Real> slice, const std::string& where);

/// Population mean and standard deviation over all pixels of the min-max
/// scaled images. A zero deviation is replaced by 1.
NormStats fit_normalization(const std::vector<SliceSample>& samples);

/// Min-max per slice, then (x - mean) / stddev.
void normalize_image(std::span<Real> slice, const NormStats& stats, const std::string& where);
void normalize_samples(std::vector<SliceSample>& samples, const NormStats& stats);

/// Network inputs for a batch of samples.
struct Batch {
  Tensor image;     // (B, 1, H, W)
  Tensor prev_mask; // (B, C, H, W)
  Tensor gt_mask;   // (B, C, H, W)
  Tensor presence;  // (B, C)
};

Batch stack_batch(std::span<const SliceSample* const> samples);

}  // namespace n2
