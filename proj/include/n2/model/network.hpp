#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "n2/model/config.hpp"
#include "n2/model/gating.hpp"
#include "n2/model/layers.hpp"
#include "n2/model/params.hpp"

namespace n2 {

/// Input and output shape of one named step of a forward pass.
struct StageRecord {
  std::string stage;
  Shape input;
  Shape output;
};

struct ForwardOptions {
  /// Skip the detection stream (and its context-free encoder pass).
  bool detection = true;
  /// Record per-stage shapes into NetworkOutput::trace.
  bool trace = false;
};

struct NetworkOutput {
  Tensor seg_logits;  // (B, num_classes, H, W)
  Tensor det_logits;  // (B, num_roi); undefined when detection is skipped
  std::vector<StageRecord> trace;
};

/// The gated encoder/decoder network.
///
/// Encoder stage s runs its swin blocks, patch-merges (s < 4), then fuses
/// previous-slice context by cross-attention. Decoder stages mirror the
/// encoder through patch expansion and skip fusion; the segmentation head
/// upsamples to image resolution. The detection head reads stage-4 features,
/// from a second context-free encoder pass when detection_context_free.
class N2Network {
 public:
  N2Network(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// image: (B, in_channels, H, W); prev_mask: (B, num_classes, H, W), may be
  /// undefined when context is disabled.
  NetworkOutput forward(const Tensor& image, const Tensor& prev_mask,
                        const ForwardOptions& options = {}) const;

  /// Inference without graph recording, gated per the model config.
  GatedPrediction predict(const Tensor& image, const Tensor& prev_mask) const;
  GatedPrediction predict(const Tensor& image, const Tensor& prev_mask, GatingMode mode,
                          double threshold) const;

  const DetectionHeadWeights& detection_weights() const { return detection_; }
  const ContextEncoderWeights& context_weights() const { return context_; }

 private:
  struct EncoderStage {
    std::vector<SwinBlockWeights> blocks;
    std::optional<PatchMergeWeights> merge;
    std::optional<CrossAttentionWeights> fuse;
  };
  struct DecoderStage {
    std::optional<PatchExpandWeights> expand;
    std::optional<SkipFuseWeights> skip;
    std::vector<SwinBlockWeights> blocks;
  };

  struct EncoderOutput {
    TokenGrid stage1_blocks;          // pre-merge stage-1 features
    std::array<TokenGrid, 4> stages;  // after merge (+ fusion)
  };

  EncoderOutput encode(const TokenGrid& embedded, const std::array<TokenGrid, 4>* context,
                       std::vector<StageRecord>* trace) const;

  ModelConfig config_;
  ParamStore params_;
  Linear patch_embed_;
  std::array<EncoderStage, 4> encoder_;
  ContextEncoderWeights context_;
  DetectionHeadWeights detection_;
  // Index 0 is decoder stage 1 (full resolution) ... index 3 is stage 4.
  std::array<DecoderStage, 4> decoder_;
  SegmentationHeadWeights seg_head_;
};

}  // namespace n2
