#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "n2/tensor.hpp"

/// Differentiable primitives. All tensors are row-major; "rows" means the
/// tensor viewed as (numel / last_dim, last_dim).
namespace n2::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);
/// a + factor * b, for scalar loss composition.
Tensor axpy(const Tensor& a, const Tensor& b, Real factor);

/// y = x W + b over the last axis. `weight` is (in, out); `bias` may be
/// undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

inline constexpr Real kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Real eps = kLayerNormEps);

/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

/// Row gather: output row i is input row index[i] (rows of `row_size`
/// elements), or zeros when index[i] < 0. Gradients scatter-add back.
Tensor gather_rows(const Tensor& x, std::int64_t row_size,
                   std::span<const std::int64_t> index, Shape out_shape);

Tensor concat_last(const Tensor& a, const Tensor& b);

/// (B, N, C) -> (B, C)
Tensor mean_tokens(const Tensor& x);

/// (B, C, h, w) -> (B, C, out_h, out_w), half-pixel centers (align_corners
/// false), edge-clamped.
Tensor upsample_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

/// Additive attention mask laid out (num_windows, Nq, Nk). Group g of an
/// attention call uses window g % num_windows.
struct AttentionMaskData {
  std::int64_t num_windows = 0;
  std::int64_t nq = 0;
  std::int64_t nk = 0;
  std::vector<Real> values;
};

/// Multi-head scaled dot-product attention over G independent groups.
/// q: (G, Nq, C), k/v: (G, Nk, C); heads split C. `bias` is an optional
/// differentiable (heads, Nq, Nk) logit offset, `mask` an optional constant
/// one. Returns (G, Nq, C), the per-head outputs concatenated on channels.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 const Tensor& bias = {}, const AttentionMaskData* mask = nullptr);

/// Softmax probabilities of the same computation, (G, heads, Nq, Nk). Not
/// differentiable; exposed for inspection and tests.
std::vector<Real> attention_probs(const Tensor& q, const Tensor& k, int heads,
                                  const Tensor& bias = {},
                                  const AttentionMaskData* mask = nullptr);

}  // namespace n2::ops
