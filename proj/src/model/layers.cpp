#include "n2/model/layers.hpp"

#include <algorithm>

#include "n2/error.hpp"

namespace n2 {

namespace {

std::int64_t wrap(std::int64_t v, std::int64_t n) { return ((v % n) + n) % n; }

// Gather indices for the 2x2 neighbourhood concatenation used by patch
// merging and the context pyramid. Input rows are tokens of size C.
std::vector<std::int64_t> merge_index(std::int64_t batch, std::int64_t gh, std::int64_t gw) {
  static constexpr std::int64_t offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(batch * gh * gw));
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t oy = 0; oy < gh / 2; ++oy)
      for (std::int64_t ox = 0; ox < gw / 2; ++ox)
        for (const auto& o : offsets) idx.push_back(b * gh * gw + (2 * oy + o[0]) * gw + 2 * ox + o[1]);
  return idx;
}

TokenGrid merge_concat(const TokenGrid& grid) {
  grid.check();
  if (grid.grid_h % 2 != 0 || grid.grid_w % 2 != 0)
    throw ShapeError("patch merge needs an even grid, got " + std::to_string(grid.grid_h) + "x" +
                     std::to_string(grid.grid_w));
  const auto idx = merge_index(grid.batch(), grid.grid_h, grid.grid_w);
  const std::int64_t c = grid.channels();
  const std::int64_t n = grid.count() / 4;
  return {ops::gather_rows(grid.tokens, c, idx, {grid.batch(), n, 4 * c}), grid.grid_h / 2,
          grid.grid_w / 2};
}

void require_same_geometry(const TokenGrid& a, const TokenGrid& b, const char* what) {
  a.check();
  b.check();
  if (a.tokens.shape() != b.tokens.shape() || a.grid_h != b.grid_h || a.grid_w != b.grid_w)
    throw ShapeError(std::string(what) + ": token grids differ, " + shape_str(a.tokens.shape()) +
                     " vs " + shape_str(b.tokens.shape()));
}

}  // namespace

void TokenGrid::check() const {
  if (!tokens.defined() || tokens.ndim() != 3)
    throw ShapeError("token grid must be (B, N, C)");
  if (tokens.dim(1) != grid_h * grid_w)
    throw ShapeError("token grid holds " + std::to_string(tokens.dim(1)) + " tokens but geometry is " +
                     std::to_string(grid_h) + "x" + std::to_string(grid_w));
}

Linear make_linear(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
                   bool bias, Rng& rng) {
  Linear l;
  l.weight = store.add(name + ".weight", xavier_uniform(in, out, rng));
  if (bias) l.bias = store.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

LayerNorm make_layer_norm(ParamStore& store, const std::string& name, std::int64_t channels) {
  return {store.add(name + ".gamma", Tensor::full({channels}, 1.0)),
          store.add(name + ".beta", Tensor::zeros({channels}))};
}

std::vector<std::int64_t> patchify_index(std::int64_t batch, std::int64_t channels, std::int64_t h,
                                         std::int64_t w, std::int64_t patch_h, std::int64_t patch_w) {
  const std::int64_t gh = h / patch_h, gw = w / patch_w;
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(batch * channels * h * w));
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t ty = 0; ty < gh; ++ty)
      for (std::int64_t tx = 0; tx < gw; ++tx)
        for (std::int64_t c = 0; c < channels; ++c)
          for (std::int64_t py = 0; py < patch_h; ++py)
            for (std::int64_t px = 0; px < patch_w; ++px)
              idx.push_back(((b * channels + c) * h + ty * patch_h + py) * w + tx * patch_w + px);
  return idx;
}

TokenGrid patch_embed(const Tensor& image, const Linear& proj, std::int64_t patch_h,
                      std::int64_t patch_w, std::int64_t expected_h, std::int64_t expected_w) {
  if (image.ndim() != 4) throw ShapeError("patch_embed: image must be (B, C, H, W), got " + shape_str(image.shape()));
  const std::int64_t b = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  if (h != expected_h) throw ShapeError("patch_embed: height axis is " + std::to_string(h) + ", expected " + std::to_string(expected_h));
  if (w != expected_w) throw ShapeError("patch_embed: width axis is " + std::to_string(w) + ", expected " + std::to_string(expected_w));
  if (h % patch_h != 0) throw ShapeError("patch_embed: height axis " + std::to_string(h) + " not divisible by patch " + std::to_string(patch_h));
  if (w % patch_w != 0) throw ShapeError("patch_embed: width axis " + std::to_string(w) + " not divisible by patch " + std::to_string(patch_w));
  if (proj.weight.dim(0) != c * patch_h * patch_w)
    throw ShapeError("patch_embed: channel axis is " + std::to_string(c) + ", projection expects " +
                     std::to_string(proj.weight.dim(0) / (patch_h * patch_w)));
  const std::int64_t gh = h / patch_h, gw = w / patch_w;
  const auto idx = patchify_index(b, c, h, w, patch_h, patch_w);
  Tensor patches = ops::gather_rows(image, 1, idx, {b, gh * gw, c * patch_h * patch_w});
  return {proj(patches), gh, gw};
}

Tensor window_partition(const TokenGrid& grid, std::int64_t window) {
  grid.check();
  if (window < 1 || grid.grid_h % window != 0 || grid.grid_w % window != 0)
    throw ShapeError("window_partition: grid " + std::to_string(grid.grid_h) + "x" +
                     std::to_string(grid.grid_w) + " not divisible by window " + std::to_string(window));
  const std::int64_t b = grid.batch(), h = grid.grid_h, w = grid.grid_w, c = grid.channels();
  const std::int64_t nwy = h / window, nwx = w / window;
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(b * h * w));
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t wy = 0; wy < nwy; ++wy)
      for (std::int64_t wx = 0; wx < nwx; ++wx)
        for (std::int64_t iy = 0; iy < window; ++iy)
          for (std::int64_t ix = 0; ix < window; ++ix)
            idx.push_back(bi * h * w + (wy * window + iy) * w + wx * window + ix);
  return ops::gather_rows(grid.tokens, c, idx, {b * nwy * nwx, window * window, c});
}

TokenGrid window_reverse(const Tensor& windows, std::int64_t grid_h, std::int64_t grid_w,
                         std::int64_t window) {
  if (windows.ndim() != 3 || window < 1 || windows.dim(1) != window * window ||
      grid_h % window != 0 || grid_w % window != 0)
    throw ShapeError("window_reverse: windows " + shape_str(windows.shape()) + " inconsistent with grid " +
                     std::to_string(grid_h) + "x" + std::to_string(grid_w) + ", window " + std::to_string(window));
  const std::int64_t nwy = grid_h / window, nwx = grid_w / window;
  if (windows.dim(0) % (nwy * nwx) != 0)
    throw ShapeError("window_reverse: " + std::to_string(windows.dim(0)) + " windows do not tile the grid");
  const std::int64_t b = windows.dim(0) / (nwy * nwx), c = windows.dim(2);
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(b * grid_h * grid_w));
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t y = 0; y < grid_h; ++y)
      for (std::int64_t x = 0; x < grid_w; ++x)
        idx.push_back(((bi * nwy + y / window) * nwx + x / window) * window * window +
                      (y % window) * window + x % window);
  return {ops::gather_rows(windows, c, idx, {b, grid_h * grid_w, c}), grid_h, grid_w};
}

TokenGrid cyclic_shift(const TokenGrid& grid, std::int64_t shift) {
  grid.check();
  const std::int64_t b = grid.batch(), h = grid.grid_h, w = grid.grid_w;
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(b * h * w));
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) idx.push_back(bi * h * w + wrap(y + shift, h) * w + wrap(x + shift, w));
  return {ops::gather_rows(grid.tokens, grid.channels(), idx, grid.tokens.shape()), h, w};
}

ops::AttentionMaskData shifted_window_mask(std::int64_t grid_h, std::int64_t grid_w,
                                           std::int64_t window, std::int64_t shift) {
  if (grid_h % window != 0 || grid_w % window != 0)
    throw ShapeError("shifted_window_mask: grid not divisible by window");
  const std::int64_t nwy = grid_h / window, nwx = grid_w / window, n = window * window;
  auto region = [&](std::int64_t v, std::int64_t size) -> int {
    if (shift == 0 || v < size - window) return 0;
    return v < size - shift ? 1 : 2;
  };
  ops::AttentionMaskData m;
  m.num_windows = nwy * nwx;
  m.nq = m.nk = n;
  m.values.assign(static_cast<std::size_t>(m.num_windows * n * n), 0.0);
  std::vector<int> label(static_cast<std::size_t>(n));
  for (std::int64_t wy = 0; wy < nwy; ++wy)
    for (std::int64_t wx = 0; wx < nwx; ++wx) {
      for (std::int64_t i = 0; i < n; ++i)
        label[static_cast<std::size_t>(i)] =
            3 * region(wy * window + i / window, grid_h) + region(wx * window + i % window, grid_w);
      Real* dst = m.values.data() + (wy * nwx + wx) * n * n;
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
          dst[i * n + j] = label[static_cast<std::size_t>(i)] == label[static_cast<std::size_t>(j)] ? 0.0 : kMaskedLogit;
    }
  return m;
}

std::vector<std::int64_t> relative_position_index(std::int64_t window) {
  const std::int64_t n = window * window, span = 2 * window - 1;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n * n));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      const std::int64_t dy = i / window - j / window + window - 1;
      const std::int64_t dx = i % window - j % window + window - 1;
      idx[static_cast<std::size_t>(i * n + j)] = dy * span + dx;
    }
  return idx;
}

WindowAttentionWeights make_window_attention(ParamStore& store, const std::string& name,
                                             std::int64_t channels, int heads, std::int64_t window,
                                             Rng& rng) {
  WindowAttentionWeights w;
  w.q = make_linear(store, name + ".q", channels, channels, true, rng);
  w.k = make_linear(store, name + ".k", channels, channels, true, rng);
  w.v = make_linear(store, name + ".v", channels, channels, true, rng);
  w.proj = make_linear(store, name + ".proj", channels, channels, true, rng);
  const std::int64_t span = 2 * window - 1;
  w.relative_bias_table = store.add(name + ".relative_bias", normal_init({span * span, heads}, 0.02, rng));
  w.heads = heads;
  w.window = window;
  return w;
}

Tensor relative_position_bias(const WindowAttentionWeights& w) {
  const auto rel = relative_position_index(w.window);
  const std::int64_t n = w.window * w.window;
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(w.heads * n * n));
  for (int h = 0; h < w.heads; ++h)
    for (auto r : rel) idx.push_back(r * w.heads + h);
  return ops::gather_rows(w.relative_bias_table, 1, idx, {w.heads, n, n});
}

Tensor window_attention(const Tensor& windows, const WindowAttentionWeights& w,
                        const ops::AttentionMaskData* mask) {
  if (windows.ndim() != 3 || windows.dim(1) != w.window * w.window)
    throw ShapeError("window_attention: windows " + shape_str(windows.shape()) + " vs window " +
                     std::to_string(w.window));
  const Tensor out = ops::attention(w.q(windows), w.k(windows), w.v(windows), w.heads,
                                    relative_position_bias(w), mask);
  return w.proj(out);
}

TokenGrid shifted_window_step(const TokenGrid& grid, std::int64_t window, std::int64_t shift,
                              const WindowAttentionWeights& w) {
  grid.check();
  if (shift < 0 || shift >= window)
    throw ConfigError("shift " + std::to_string(shift) + " must lie in [0, " + std::to_string(window) + ")");
  if (window >= grid.grid_h && window >= grid.grid_w) shift = 0;
  if (shift == 0) {
    const Tensor out = window_attention(window_partition(grid, window), w);
    return window_reverse(out, grid.grid_h, grid.grid_w, window);
  }
  const TokenGrid rolled = cyclic_shift(grid, shift);
  const auto mask = shifted_window_mask(grid.grid_h, grid.grid_w, window, shift);
  const Tensor out = window_attention(window_partition(rolled, window), w, &mask);
  return cyclic_shift(window_reverse(out, grid.grid_h, grid.grid_w, window), -shift);
}

SwinBlockWeights make_swin_block(ParamStore& store, const std::string& name, std::int64_t grid_h,
                                 std::int64_t grid_w, std::int64_t channels, int heads,
                                 std::int64_t window, int mlp_ratio, int block_index, Rng& rng) {
  SwinBlockWeights b;
  b.norm1 = make_layer_norm(store, name + ".norm1", channels);
  b.attn = make_window_attention(store, name + ".attn", channels, heads, window, rng);
  b.norm2 = make_layer_norm(store, name + ".norm2", channels);
  b.fc1 = make_linear(store, name + ".fc1", channels, channels * mlp_ratio, true, rng);
  b.fc2 = make_linear(store, name + ".fc2", channels * mlp_ratio, channels, true, rng);
  b.window = window;
  const bool spans_grid = window >= grid_h && window >= grid_w;
  b.shift = (block_index % 2 == 1 && !spans_grid) ? window / 2 : 0;
  return b;
}

TokenGrid swin_block(const TokenGrid& grid, const SwinBlockWeights& w) {
  grid.check();
  const TokenGrid normed{w.norm1(grid.tokens), grid.grid_h, grid.grid_w};
  const TokenGrid attn = shifted_window_step(normed, w.window, w.shift, w.attn);
  const Tensor x = ops::add(grid.tokens, attn.tokens);
  const Tensor mlp = w.fc2(ops::gelu(w.fc1(w.norm2(x))));
  return {ops::add(x, mlp), grid.grid_h, grid.grid_w};
}

TokenGrid patch_merge(const TokenGrid& grid, const PatchMergeWeights& w) {
  const TokenGrid cat = merge_concat(grid);
  return {w.reduction(w.norm(cat.tokens)), cat.grid_h, cat.grid_w};
}

TokenGrid patch_expand(const TokenGrid& grid, const PatchExpandWeights& w) {
  grid.check();
  const Tensor wide = w.expand(grid.tokens);
  const std::int64_t c2 = wide.dim(2);
  if (c2 % 4 != 0) throw ShapeError("patch_expand: expanded channels " + std::to_string(c2) + " not divisible by 4");
  const std::int64_t b = grid.batch(), gh = grid.grid_h, gw = grid.grid_w, oc = c2 / 4;
  const std::int64_t oh = 2 * gh, ow = 2 * gw;
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(b * oh * ow));
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t x = 0; x < ow; ++x) {
        const std::int64_t k = (y % 2) + 2 * (x % 2);
        idx.push_back((bi * gh * gw + (y / 2) * gw + x / 2) * 4 + k);
      }
  return {ops::gather_rows(wide, oc, idx, {b, oh * ow, oc}), oh, ow};
}

TokenGrid skip_fuse(const TokenGrid& decoder, const TokenGrid& skip, const SkipFuseWeights& w) {
  require_same_geometry(decoder, skip, "skip_fuse");
  return {w.proj(ops::concat_last(decoder.tokens, skip.tokens)), decoder.grid_h, decoder.grid_w};
}

std::array<TokenGrid, 4> context_encode_all(const Tensor& prev_mask, const ContextEncoderWeights& w) {
  if (prev_mask.ndim() != 4) throw ShapeError("context_encode: mask must be (B, K, H, W), got " + shape_str(prev_mask.shape()));
  const std::int64_t b = prev_mask.dim(0), k = prev_mask.dim(1), h = prev_mask.dim(2), wd = prev_mask.dim(3);
  if (h % w.patch_h != 0 || wd % w.patch_w != 0 || w.embed.weight.dim(0) != k * w.patch_h * w.patch_w)
    throw ShapeError("context_encode: mask " + shape_str(prev_mask.shape()) + " does not match the context encoder");
  const std::int64_t gh = h / w.patch_h, gw = wd / w.patch_w;
  const auto idx = patchify_index(b, k, h, wd, w.patch_h, w.patch_w);
  Tensor patches = ops::gather_rows(prev_mask, 1, idx, {b, gh * gw, k * w.patch_h * w.patch_w});
  std::array<TokenGrid, 4> levels;
  levels[0] = {ops::gelu(w.embed(patches)), gh, gw};
  for (int l = 1; l <= 3; ++l) {
    const TokenGrid cat = merge_concat(levels[static_cast<std::size_t>(l - 1)]);
    levels[static_cast<std::size_t>(l)] = {ops::gelu(w.down[static_cast<std::size_t>(l - 1)](cat.tokens)), cat.grid_h, cat.grid_w};
  }
  std::array<TokenGrid, 4> out;
  for (int s = 1; s <= 4; ++s) {
    const auto& lv = levels[static_cast<std::size_t>(std::min(s, 3))];
    out[static_cast<std::size_t>(s - 1)] = {w.project[static_cast<std::size_t>(s - 1)](lv.tokens), lv.grid_h, lv.grid_w};
  }
  return out;
}

TokenGrid context_encode(const Tensor& prev_mask, int stage, const ContextEncoderWeights& w) {
  if (stage < 1 || stage > 4) throw ConfigError("context_encode: stage must be in 1..4, got " + std::to_string(stage));
  return context_encode_all(prev_mask, w)[static_cast<std::size_t>(stage - 1)];
}

TokenGrid context_fuse(const TokenGrid& encoder, const TokenGrid& context, const CrossAttentionWeights& w) {
  require_same_geometry(encoder, context, "context_fuse");
  const Tensor qn = w.norm_q(encoder.tokens);
  const Tensor kvn = w.norm_kv(context.tokens);
  const Tensor att = ops::attention(w.q(qn), w.k(kvn), w.v(kvn), w.heads);
  return {ops::add(encoder.tokens, w.proj(att)), encoder.grid_h, encoder.grid_w};
}

Tensor detection_head(const TokenGrid& grid, const DetectionHeadWeights& w) {
  grid.check();
  const Tensor pooled = ops::mean_tokens(w.norm(grid.tokens));
  return w.fc2(ops::gelu(w.fc1(pooled)));
}

Tensor segmentation_head(const TokenGrid& grid, const SegmentationHeadWeights& w, std::int64_t out_h,
                         std::int64_t out_w, std::vector<Shape>* steps) {
  grid.check();
  const Tensor normed = w.norm(grid.tokens);
  const Tensor logits = w.proj(normed);  // (B, N, K)
  const std::int64_t b = grid.batch(), n = grid.count(), k = logits.dim(2);
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(b * k * n));
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t ki = 0; ki < k; ++ki)
      for (std::int64_t t = 0; t < n; ++t) idx.push_back((bi * n + t) * k + ki);
  const Tensor planes = ops::gather_rows(logits, 1, idx, {b, k, grid.grid_h, grid.grid_w});
  Tensor out = ops::upsample_bilinear(planes, out_h, out_w);
  if (steps) *steps = {normed.shape(), logits.shape(), planes.shape(), out.shape()};
  return out;
}

}  // namespace n2
