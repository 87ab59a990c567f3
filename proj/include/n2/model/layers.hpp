#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "n2/model/params.hpp"
#include "n2/ops.hpp"
#include "n2/tensor.hpp"

namespace n2 {

/// A batch of token sequences laid out row-major over a (grid_h, grid_w)
/// spatial grid: tokens is (B, grid_h * grid_w, C).
struct TokenGrid {
  Tensor tokens;
  std::int64_t grid_h = 0;
  std::int64_t grid_w = 0;

  std::int64_t batch() const { return tokens.dim(0); }
  std::int64_t count() const { return tokens.dim(1); }
  std::int64_t channels() const { return tokens.dim(2); }
  /// Throws ShapeError unless tokens is 3-D with N == grid_h * grid_w.
  void check() const;
};

// --- building blocks -------------------------------------------------------

struct Linear {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out) or undefined
  Tensor operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  Tensor operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }
};

Linear make_linear(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
                   bool bias, Rng& rng);
LayerNorm make_layer_norm(ParamStore& store, const std::string& name, std::int64_t channels);

// --- patch embedding -------------------------------------------------------

/// Row indices that flatten each (patch_h, patch_w) patch of a (B, C, H, W)
/// image into one (C * patch_h * patch_w) vector, channel-major.
std::vector<std::int64_t> patchify_index(std::int64_t batch, std::int64_t channels, std::int64_t h,
                                         std::int64_t w, std::int64_t patch_h, std::int64_t patch_w);

/// (B, C, H, W) -> tokens (B, H/ph * W/pw, D) by projecting flattened patches.
TokenGrid patch_embed(const Tensor& image, const Linear& proj, std::int64_t patch_h,
                      std::int64_t patch_w, std::int64_t expected_h, std::int64_t expected_w);

// --- windowing -------------------------------------------------------------

/// (B, H*W, C) -> (B * num_windows, window^2, C); windows in row-major order,
/// tokens row-major within each window.
Tensor window_partition(const TokenGrid& grid, std::int64_t window);
/// Exact inverse of window_partition.
TokenGrid window_reverse(const Tensor& windows, std::int64_t grid_h, std::int64_t grid_w,
                         std::int64_t window);
/// Cyclic roll by (-shift, -shift): out[y][x] = in[(y+shift) % H][(x+shift) % W].
/// Negative shifts undo positive ones.
TokenGrid cyclic_shift(const TokenGrid& grid, std::int64_t shift);

inline constexpr Real kMaskedLogit = -1e4;

/// Additive mask for shifted-window attention on the rolled grid: 0 where
/// two tokens of a window come from the same region before the roll, and
/// kMaskedLogit otherwise. All zeros when shift is 0.
ops::AttentionMaskData shifted_window_mask(std::int64_t grid_h, std::int64_t grid_w,
                                           std::int64_t window, std::int64_t shift);

/// Index into the relative position table for each (query, key) pair of a
/// window: (dy + w - 1) * (2w - 1) + (dx + w - 1).
std::vector<std::int64_t> relative_position_index(std::int64_t window);

struct WindowAttentionWeights {
  Linear q, k, v, proj;
  Tensor relative_bias_table;  // ((2w-1)^2, heads)
  int heads = 1;
  std::int64_t window = 1;
};

WindowAttentionWeights make_window_attention(ParamStore& store, const std::string& name,
                                             std::int64_t channels, int heads, std::int64_t window,
                                             Rng& rng);

/// (heads, w^2, w^2) learned relative position bias.
Tensor relative_position_bias(const WindowAttentionWeights& w);

/// Multi-head self-attention inside each window; (G, w^2, C) -> (G, w^2, C).
Tensor window_attention(const Tensor& windows, const WindowAttentionWeights& w,
                        const ops::AttentionMaskData* mask = nullptr);

/// Roll, mask, windowed attention, un-roll. A window covering the whole
/// grid is never shifted, since rolling a single window only permutes it.
TokenGrid shifted_window_step(const TokenGrid& grid, std::int64_t window, std::int64_t shift,
                              const WindowAttentionWeights& w);

// --- transformer block -----------------------------------------------------

struct SwinBlockWeights {
  LayerNorm norm1;
  WindowAttentionWeights attn;
  LayerNorm norm2;
  Linear fc1, fc2;
  std::int64_t window = 1;
  std::int64_t shift = 0;
};

/// Even block indices use shift 0, odd ones window/2 (0 when the window
/// spans the grid).
SwinBlockWeights make_swin_block(ParamStore& store, const std::string& name,
                                 std::int64_t grid_h, std::int64_t grid_w, std::int64_t channels,
                                 int heads, std::int64_t window, int mlp_ratio, int block_index,
                                 Rng& rng);

/// x + attn(norm1(x)), then x + mlp(norm2(x)).
TokenGrid swin_block(const TokenGrid& grid, const SwinBlockWeights& w);

// --- resolution changes ----------------------------------------------------

struct PatchMergeWeights {
  LayerNorm norm;   // 4C
  Linear reduction; // 4C -> 2C, no bias
};

/// Concatenates each 2x2 neighbourhood in the order (0,0), (1,0), (0,1),
/// (1,1) as (row, col) offsets, normalizes, projects to 2C.
TokenGrid patch_merge(const TokenGrid& grid, const PatchMergeWeights& w);

struct PatchExpandWeights {
  Linear expand;  // C -> 2C, no bias
};

/// Projects to 2C and scatters the four C/2 channel groups to a 2x2
/// neighbourhood, in the same order patch_merge gathers them.
TokenGrid patch_expand(const TokenGrid& grid, const PatchExpandWeights& w);

struct SkipFuseWeights {
  Linear proj;  // 2C -> C
};

/// Linear projection of [decoder ‖ skip] back to decoder channels.
TokenGrid skip_fuse(const TokenGrid& decoder, const TokenGrid& skip, const SkipFuseWeights& w);

// --- previous-slice context ------------------------------------------------

struct ContextEncoderWeights {
  Linear embed;                  // K*ph*pw -> D
  std::array<Linear, 3> down;    // level l: 4 * D*2^(l-1) -> D*2^l
  std::array<Linear, 4> project; // per encoder stage, square
  std::int64_t patch_h = 1;
  std::int64_t patch_w = 1;
};

/// Mask pyramid: patchify conv, then three stride-2 2x2 convs with GELU.
/// Stage s reads level min(s, 3) through its own projection. Each context
/// token at level l sees exactly one (ph*2^l, pw*2^l) block of the mask.
std::array<TokenGrid, 4> context_encode_all(const Tensor& prev_mask, const ContextEncoderWeights& w);
TokenGrid context_encode(const Tensor& prev_mask, int stage, const ContextEncoderWeights& w);

struct CrossAttentionWeights {
  LayerNorm norm_q, norm_kv;
  Linear q, k, v, proj;
  int heads = 1;
};

/// enc + proj(attention(q(norm(enc)), k(norm(ctx)), v(norm(ctx)))), global
/// over all tokens of the slice.
TokenGrid context_fuse(const TokenGrid& encoder, const TokenGrid& context,
                       const CrossAttentionWeights& w);

// --- heads -----------------------------------------------------------------

struct DetectionHeadWeights {
  LayerNorm norm;
  Linear fc1, fc2;
};

/// norm -> mean over tokens -> fc1 -> GELU -> fc2; returns (B, num_roi) logits.
Tensor detection_head(const TokenGrid& grid, const DetectionHeadWeights& w);

struct SegmentationHeadWeights {
  LayerNorm norm;
  Linear proj;  // C -> num_classes
};

/// norm -> linear -> (B, K, grid_h, grid_w) -> bilinear upsample to (out_h, out_w).
/// `steps`, when given, receives the output shape of each of the four steps.
Tensor segmentation_head(const TokenGrid& grid, const SegmentationHeadWeights& w,
                         std::int64_t out_h, std::int64_t out_w,
                         std::vector<Shape>* steps = nullptr);

}  // namespace n2
