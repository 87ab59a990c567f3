#pragma once

#include <cmath>

#include "n2/model/config.hpp"
#include "n2/tensor.hpp"

namespace n2 {

/// Segmentation output after detection gating. Values only, no graph.
struct GatedPrediction {
  Tensor seg_probs;   // (B, num_classes, H, W), in [0, 1]
  Tensor seg_logits;  // (B, num_classes, H, W)
  Tensor det_probs;   // (B, num_roi), in [0, 1]
  GatingMode gating_mode = GatingMode::none;
  double gating_threshold = 0.5;
};

inline Real logistic(Real x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Detection confidence that gates segmentation class `c` of batch item `b`:
/// det_probs[b, c] when class counts agree, the max over all ROIs when a
/// single segmentation class is gated by several detection outputs.
Real gate_confidence(const Tensor& det_probs, std::int64_t b, std::int64_t c, std::int64_t num_classes);

/// none: sigmoid(logits). soft: sigmoid(logits) * p. hard: sigmoid(logits),
/// with the whole class plane zeroed when p < threshold.
GatedPrediction gate(const Tensor& seg_logits, const Tensor& det_probs, GatingMode mode,
                     double threshold);

}  // namespace n2
