#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2/data/samples.hpp"
#include "n2/data/volume.hpp"
#include "n2/model/network.hpp"

namespace n2 {

/// Autoregressive predictions for one volume.
struct VolumeInference {
  std::int64_t depth = 0;
  std::int64_t classes = 0;
  std::int64_t rois = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<Real> probs;           // (C, Z, H, W), gated
  std::vector<std::uint8_t> masks;   // (C, Z, H, W), probs >= 0.5
  std::vector<Real> det_probs;       // (Z, R)
  std::vector<Real> gate_probs;      // (Z, C), confidence gating each class

  std::int64_t plane() const { return height * width; }
};

/// Gated prediction of one slice: image (1, 1, H, W), prev_mask (1, C, H, W)
/// or undefined when the model ignores context.
using SlicePredictor = std::function<GatedPrediction(const Tensor& image, const Tensor& prev_mask)>;

/// Runs slices in ascending z. Slice 0 gets an all-zero context; slice z
/// gets the 0.5-thresholded gated prediction of slice z-1. `images` holds
/// normalized (Z, H, W) intensities.
VolumeInference infer_slices(const SlicePredictor& predict, const std::vector<Real>& images, std::int64_t depth,
                             std::int64_t height, std::int64_t width, std::int64_t classes, bool use_context);

/// Normalizes each slice with `norm` and runs infer_slices. Throws DataError
/// before any compute when the volume does not match the model geometry.
VolumeInference infer_volume(const N2Network& net, const VolumeRecord& volume, const NormStats& norm,
                             GatingMode mode, double threshold);

/// A network with the metadata training stored next to it.
struct TrainedModel {
  std::unique_ptr<N2Network> net;
  NormStats norm;
  std::vector<std::string> class_names;
  nlohmann::json extra;
};

/// Loads a checkpoint written by the trainer. Throws DataError naming the
/// path when it is missing or lacks normalization statistics.
TrainedModel load_trained_model(const std::filesystem::path& path);

}  // namespace n2
