#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2/tensor.hpp"

namespace n2 {

/// Tversky index weights. alpha penalizes false positives, beta false
/// negatives; alpha = beta = 0.5 reduces to Dice.
struct TverskyParams {
  double alpha = 0.3;
  double beta = 0.7;
  double smooth = 1e-6;
  void validate() const;
};

void to_json(nlohmann::json& j, const TverskyParams& p);
void from_json(const nlohmann::json& j, TverskyParams& p);

/// Soft confusion counts of one (slice, class) plane.
struct ConfusionCounts {
  Real tp = 0;
  Real fp = 0;
  Real fn = 0;
};

/// Soft counts per (b, c) plane of (B, C, H, W) predictions.
std::vector<ConfusionCounts> confusion_counts(const Tensor& pred, const Tensor& gt);

/// Mean over (slice, class) planes of 1 - (TP + s) / (TP + a FP + b FN + s),
/// differentiable with respect to `pred`.
Tensor tversky_loss(const Tensor& pred, const Tensor& gt, const TverskyParams& params);

/// 1 - (2TP + s) / (2TP + FP + FN + s) per (b, c) plane, row-major (B, C).
/// A plane with a zero denominator (empty prediction and ground truth with
/// s = 0) scores 0.
std::vector<Real> dice_loss(const Tensor& pred, const Tensor& gt, double smooth);

/// Mean binary cross-entropy with logits, log-sum-exp stabilized.
Tensor detection_loss(const Tensor& logits, const Tensor& presence);

/// seg + lambda_det * det. `det` may be undefined (segmentation-only
/// training). Throws TrainingError when either term is non-finite.
Tensor combined_loss(const Tensor& seg, const Tensor& det, double lambda_det);

/// Per-class presence of a (C, H, W) binary mask.
std::vector<bool> presence_from_mask(const Tensor& mask);

/// Evaluation-time record for one (slice, class).
struct SliceMetricsRecord {
  std::string subject_id;
  std::int64_t slice_index = 0;
  std::int64_t class_id = 0;
  double dice_loss = 0;
  bool presence_gt = false;
  double det_prob = 0;
  bool predicted_any = false;
  bool hallucinated = false;
};

}  // namespace n2
