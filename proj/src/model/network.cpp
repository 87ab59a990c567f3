#include "n2/model/network.hpp"

#include <algorithm>

#include "n2/error.hpp"

namespace n2 {

namespace {

std::string idx(int i) { return std::to_string(i); }

template <class F>
auto in_stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError("stage " + name + ": " + e.what());
  }
}

std::vector<SwinBlockWeights> make_blocks(ParamStore& store, const std::string& prefix,
                                          const ModelConfig& cfg, const StageGeometry& g, int depth,
                                          int heads, Rng& rng) {
  std::vector<SwinBlockWeights> blocks;
  const auto window = cfg.effective_window(g);
  for (int i = 0; i < depth; ++i)
    blocks.push_back(make_swin_block(store, prefix + ".block." + idx(i), g.grid_h, g.grid_w, g.channels,
                                     heads, window, cfg.mlp_ratio, i, rng));
  return blocks;
}

TokenGrid run_blocks(TokenGrid x, const std::vector<SwinBlockWeights>& blocks) {
  for (const auto& b : blocks) x = swin_block(x, b);
  return x;
}

}  // namespace

N2Network::N2Network(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;
  const std::int64_t d = c.embed_dim;

  patch_embed_ = make_linear(params_, "patch_embed.proj", c.in_channels * c.patch_h * c.patch_w, d, true, rng);

  for (int s = 1; s <= 4; ++s) {
    auto& st = encoder_[static_cast<std::size_t>(s - 1)];
    const auto g = c.block_geometry(s);
    const std::string p = "encoder." + idx(s);
    st.blocks = make_blocks(params_, p, c, g, c.stage_depths[static_cast<std::size_t>(s - 1)],
                            c.num_heads[static_cast<std::size_t>(s - 1)], rng);
    if (s < 4)
      st.merge = PatchMergeWeights{make_layer_norm(params_, p + ".merge.norm", 4 * g.channels),
                                   make_linear(params_, p + ".merge.reduction", 4 * g.channels, 2 * g.channels, false, rng)};
    if (c.context_enabled) {
      const auto out = c.stage_output(s);
      const std::string f = "fuse." + idx(s);
      CrossAttentionWeights w;
      w.norm_q = make_layer_norm(params_, f + ".norm_q", out.channels);
      w.norm_kv = make_layer_norm(params_, f + ".norm_kv", out.channels);
      w.q = make_linear(params_, f + ".q", out.channels, out.channels, true, rng);
      w.k = make_linear(params_, f + ".k", out.channels, out.channels, true, rng);
      w.v = make_linear(params_, f + ".v", out.channels, out.channels, true, rng);
      w.proj = make_linear(params_, f + ".proj", out.channels, out.channels, true, rng);
      w.heads = c.num_heads[static_cast<std::size_t>(std::min(s, 3))];
      st.fuse = w;
    }
  }

  if (c.context_enabled) {
    context_.patch_h = c.patch_h;
    context_.patch_w = c.patch_w;
    context_.embed = make_linear(params_, "context.embed", c.num_classes * c.patch_h * c.patch_w, d, true, rng);
    for (int l = 1; l <= 3; ++l) {
      const std::int64_t cin = d << (l - 1);
      context_.down[static_cast<std::size_t>(l - 1)] =
          make_linear(params_, "context.down." + idx(l), 4 * cin, 2 * cin, true, rng);
    }
    for (int s = 1; s <= 4; ++s) {
      const std::int64_t ch = c.stage_output(s).channels;
      context_.project[static_cast<std::size_t>(s - 1)] =
          make_linear(params_, "context.project." + idx(s), ch, ch, true, rng);
    }
  }

  const std::int64_t top = c.stage_output(4).channels;
  detection_.norm = make_layer_norm(params_, "detect.norm", top);
  detection_.fc1 = make_linear(params_, "detect.fc1", top, c.detection_hidden, true, rng);
  detection_.fc2 = make_linear(params_, "detect.fc2", c.detection_hidden, c.num_roi, true, rng);

  // Decoder stages 4, 3, 2 expand and fuse a skip; stages 4, 3 and 1 run
  // blocks at the geometry of encoder stages 3, 2 and 1.
  for (int s = 4; s >= 2; --s) {
    auto& st = decoder_[static_cast<std::size_t>(s - 1)];
    const std::string p = "decoder." + idx(s);
    const std::int64_t cin = c.block_geometry(s).channels;
    const auto target = c.block_geometry(s - 1);
    st.expand = PatchExpandWeights{make_linear(params_, p + ".expand", cin, 2 * cin, false, rng)};
    st.skip = SkipFuseWeights{make_linear(params_, p + ".skip", 2 * target.channels, target.channels, true, rng)};
    if (s > 2)
      st.blocks = make_blocks(params_, p, c, target, c.stage_depths[static_cast<std::size_t>(s - 2)],
                              c.num_heads[static_cast<std::size_t>(s - 2)], rng);
  }
  decoder_[0].blocks = make_blocks(params_, "decoder.1", c, c.block_geometry(1), c.stage_depths[0], c.num_heads[0], rng);

  seg_head_.norm = make_layer_norm(params_, "seg_head.norm", d);
  seg_head_.proj = make_linear(params_, "seg_head.proj", d, c.num_classes, true, rng);
}

N2Network::EncoderOutput N2Network::encode(const TokenGrid& embedded, const std::array<TokenGrid, 4>* context,
                                           std::vector<StageRecord>* trace) const {
  EncoderOutput out;
  TokenGrid x = embedded;
  for (int s = 1; s <= 4; ++s) {
    const auto& st = encoder_[static_cast<std::size_t>(s - 1)];
    const std::string name = "encoder." + idx(s);
    const Shape in_shape = x.tokens.shape();
    x = in_stage(name, [&] {
      TokenGrid y = run_blocks(x, st.blocks);
      if (s == 1) out.stage1_blocks = y;
      if (st.merge) y = patch_merge(y, *st.merge);
      return y;
    });
    if (trace) trace->push_back({name, in_shape, x.tokens.shape()});
    if (context && st.fuse) {
      const std::string fname = "context_fuse." + idx(s);
      const auto& ctx = (*context)[static_cast<std::size_t>(s - 1)];
      const Shape before = x.tokens.shape();
      x = in_stage(fname, [&] { return context_fuse(x, ctx, *st.fuse); });
      if (trace) trace->push_back({fname, before, x.tokens.shape()});
    }
    const auto expected = config_.stage_output(s);
    if (x.grid_h != expected.grid_h || x.grid_w != expected.grid_w || x.channels() != expected.channels)
      throw ShapeError("stage " + name + ": output " + shape_str(x.tokens.shape()) + " breaks the stage schedule");
    out.stages[static_cast<std::size_t>(s - 1)] = x;
  }
  return out;
}

NetworkOutput N2Network::forward(const Tensor& image, const Tensor& prev_mask, const ForwardOptions& options) const {
  const auto& c = config_;
  if (!image.defined() || image.ndim() != 4)
    throw ShapeError("forward: image must be (B, C, H, W)");
  if (image.dim(1) != c.in_channels)
    throw ShapeError("forward: image channel axis is " + std::to_string(image.dim(1)) + ", config expects " +
                     std::to_string(c.in_channels));
  const std::int64_t batch = image.dim(0);
  if (c.context_enabled) {
    if (!prev_mask.defined() || prev_mask.shape() != Shape{batch, c.num_classes, c.image_h, c.image_w})
      throw ShapeError("forward: previous mask must be " +
                       shape_str({batch, c.num_classes, c.image_h, c.image_w}) + ", got " +
                       (prev_mask.defined() ? shape_str(prev_mask.shape()) : std::string("nothing")));
  }

  NetworkOutput result;
  auto* trace = options.trace ? &result.trace : nullptr;

  const TokenGrid embedded = in_stage("patch_embed", [&] {
    return patch_embed(image, patch_embed_, c.patch_h, c.patch_w, c.image_h, c.image_w);
  });
  if (trace) trace->push_back({"patch_embed", image.shape(), embedded.tokens.shape()});

  std::array<TokenGrid, 4> context;
  if (c.context_enabled) {
    context = in_stage("context_encoder", [&] { return context_encode_all(prev_mask, context_); });
    if (trace)
      for (int s = 1; s <= 4; ++s)
        trace->push_back({"context_encoder." + idx(s), prev_mask.shape(), context[static_cast<std::size_t>(s - 1)].tokens.shape()});
  }

  const EncoderOutput enc = encode(embedded, c.context_enabled ? &context : nullptr, trace);

  if (options.detection) {
    const TokenGrid* det_in = &enc.stages[3];
    EncoderOutput plain;
    if (c.context_enabled && c.detection_context_free) {
      plain = encode(embedded, nullptr, nullptr);
      det_in = &plain.stages[3];
    }
    result.det_logits = in_stage("detection_head", [&] { return detection_head(*det_in, detection_); });
    if (trace) trace->push_back({"detection_head", det_in->tokens.shape(), result.det_logits.shape()});
  }

  TokenGrid x = enc.stages[3];
  const std::array<const TokenGrid*, 4> skips{nullptr, &enc.stage1_blocks, &enc.stages[0], &enc.stages[1]};
  for (int s = 4; s >= 1; --s) {
    const auto& st = decoder_[static_cast<std::size_t>(s - 1)];
    const std::string name = "decoder." + idx(s);
    const Shape in_shape = x.tokens.shape();
    x = in_stage(name, [&] {
      TokenGrid y = x;
      if (st.expand) y = patch_expand(y, *st.expand);
      if (st.skip) y = skip_fuse(y, *skips[static_cast<std::size_t>(s - 1)], *st.skip);
      return run_blocks(y, st.blocks);
    });
    if (trace) trace->push_back({name, in_shape, x.tokens.shape()});
  }

  std::vector<Shape> head_steps;
  result.seg_logits = in_stage("segmentation_head", [&] {
    return segmentation_head(x, seg_head_, c.image_h, c.image_w, trace ? &head_steps : nullptr);
  });
  if (trace) {
    static const char* names[4] = {"seg_head.norm", "seg_head.project", "seg_head.reshape", "seg_head.upsample"};
    Shape prev = x.tokens.shape();
    for (std::size_t i = 0; i < head_steps.size(); ++i) {
      trace->push_back({names[i], prev, head_steps[i]});
      prev = head_steps[i];
    }
  }
  return result;
}

GatedPrediction N2Network::predict(const Tensor& image, const Tensor& prev_mask) const {
  return predict(image, prev_mask, config_.gating_mode, config_.gating_threshold);
}

GatedPrediction N2Network::predict(const Tensor& image, const Tensor& prev_mask, GatingMode mode,
                                   double threshold) const {
  NoGradGuard guard;
  const auto out = forward(image, prev_mask);
  std::vector<Real> probs(out.det_logits.values().begin(), out.det_logits.values().end());
  for (auto& p : probs) p = logistic(p);
  return gate(out.seg_logits, Tensor(out.det_logits.shape(), std::move(probs)), mode, threshold);
}

}  // namespace n2
