#include "n2/model/gating.hpp"

#include <algorithm>
#include <cmath>

#include "n2/error.hpp"

namespace n2 {

Real gate_confidence(const Tensor& det_probs, std::int64_t b, std::int64_t c, std::int64_t num_classes) {
  const std::int64_t rois = det_probs.dim(1);
  const auto v = det_probs.values();
  if (rois == num_classes) return v[static_cast<std::size_t>(b * rois + c)];
  if (num_classes == 1) {
    auto row = v.subspan(static_cast<std::size_t>(b * rois), static_cast<std::size_t>(rois));
    return *std::max_element(row.begin(), row.end());
  }
  throw ConfigError("gate: " + std::to_string(num_classes) + " segmentation classes vs " +
                    std::to_string(rois) + " detection outputs and no class map");
}

GatedPrediction gate(const Tensor& seg_logits, const Tensor& det_probs, GatingMode mode, double threshold) {
  if (seg_logits.ndim() != 4) throw ShapeError("gate: logits must be (B, K, H, W), got " + shape_str(seg_logits.shape()));
  if (det_probs.ndim() != 2 || det_probs.dim(0) != seg_logits.dim(0))
    throw ShapeError("gate: detection probabilities " + shape_str(det_probs.shape()) + " vs logits " +
                     shape_str(seg_logits.shape()));
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("gate: threshold must lie in [0,1]");
  for (Real p : det_probs.values())
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("gate: detection probability outside [0,1]");

  const std::int64_t b = seg_logits.dim(0), k = seg_logits.dim(1);
  const std::int64_t plane = seg_logits.dim(2) * seg_logits.dim(3);
  const auto lv = seg_logits.values();
  std::vector<Real> probs(lv.size());
  for (std::size_t i = 0; i < lv.size(); ++i) probs[i] = logistic(lv[i]);

  // Validate the class map even for mode none so misconfiguration surfaces early.
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t c = 0; c < k; ++c) {
      const Real p = gate_confidence(det_probs, bi, c, k);
      Real* dst = probs.data() + (bi * k + c) * plane;
      if (mode == GatingMode::soft) {
        for (std::int64_t i = 0; i < plane; ++i) dst[i] *= p;
      } else if (mode == GatingMode::hard && p < threshold) {
        std::fill(dst, dst + plane, 0.0);
      }
    }

  GatedPrediction out;
  out.seg_probs = Tensor(seg_logits.shape(), std::move(probs));
  out.seg_logits = seg_logits.detach();
  out.det_probs = det_probs.detach();
  out.gating_mode = mode;
  out.gating_threshold = threshold;
  return out;
}

}  // namespace n2
