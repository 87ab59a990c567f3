#pragma once

// Whole-network checks shared by the unit and acceptance suites.

#include <string>
#include <vector>

#include "test_support.hpp"

#include "n2/losses.hpp"
#include "n2/model/network.hpp"

namespace n2::testing {

struct ModelGradCheck {
  GradCheck result;
  std::vector<std::string> worst_params;  // names whose error exceeded `tolerance`
};

/// Compares the backpropagated gradient of the combined training loss with
/// central differences on one element of `count` parameters spread evenly
/// over the parameter list.
inline ModelGradCheck full_model_gradcheck(const ModelConfig& cfg, std::uint64_t seed, int count,
                                           double tolerance) {
  N2Network net(cfg, seed);
  Rng rng(derive_seed(seed, {17}));
  // Non-default norms and biases so every parameter influences the loss.
  for (const auto& [name, t] : net.params().entries())
    for (auto& v : Tensor(t).mutable_values()) v += 0.05 * rng.normal();
  const std::int64_t b = 2, k = cfg.num_classes, h = cfg.image_h, w = cfg.image_w;
  const auto image = random_tensor({b, cfg.in_channels, h, w}, rng);
  const auto prev = random_binary({b, k, h, w}, rng, 0.3);
  const auto gt = random_binary({b, k, h, w}, rng, 0.3);
  std::vector<Real> pres(static_cast<std::size_t>(b * cfg.num_roi));
  for (auto& p : pres) p = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const Tensor presence({b, cfg.num_roi}, pres);
  const TverskyParams tp;
  auto loss = [&] {
    const auto out = net.forward(image, cfg.context_enabled ? prev : Tensor{});
    return combined_loss(tversky_loss(ops::sigmoid(out.seg_logits), gt, tp), detection_loss(out.det_logits, presence), 1.0);
  };

  net.params().zero_grad();
  loss().backward();
  ModelGradCheck out;
  const auto& entries = net.params().entries();
  for (int i = 0; i < count; ++i) {
    const auto& [name, t] = entries[static_cast<std::size_t>(i) * entries.size() / static_cast<std::size_t>(count)];
    const auto idx = static_cast<std::size_t>(rng.uniform_int(0, t.numel() - 1));
    const double analytic = t.has_grad() ? t.grad()[idx] : 0.0;
    const double numeric = numeric_grad(t, idx, [&] { return loss().item(); }, 1e-5);
    const double err = relative_error(analytic, numeric, 1e-6);
    out.result.worst = std::max(out.result.worst, err);
    ++out.result.checked;
    if (err > tolerance) out.worst_params.push_back(name + " (" + std::to_string(analytic) + " vs " + std::to_string(numeric) + ")");
  }
  return out;
}

/// Every input/output shape the reference schedule prescribes for a batch of
/// 8 single-channel 256x256 slices, one segmentation class and 3 detection
/// outputs.
inline std::vector<StageRecord> reference_shape_schedule() {
  return {
      {"patch_embed", {8, 1, 256, 256}, {8, 4096, 96}},
      {"encoder.1", {8, 4096, 96}, {8, 1024, 192}},
      {"encoder.2", {8, 1024, 192}, {8, 256, 384}},
      {"encoder.3", {8, 256, 384}, {8, 64, 768}},
      {"encoder.4", {8, 64, 768}, {8, 64, 768}},
      {"detection_head", {8, 64, 768}, {8, 3}},
      {"decoder.4", {8, 64, 768}, {8, 256, 384}},
      {"decoder.3", {8, 256, 384}, {8, 1024, 192}},
      {"decoder.2", {8, 1024, 192}, {8, 4096, 96}},
      {"decoder.1", {8, 4096, 96}, {8, 4096, 96}},
      {"seg_head.norm", {8, 4096, 96}, {8, 4096, 96}},
      {"seg_head.project", {8, 4096, 96}, {8, 4096, 1}},
      {"seg_head.reshape", {8, 4096, 1}, {8, 1, 64, 64}},
      {"seg_head.upsample", {8, 1, 64, 64}, {8, 1, 256, 256}},
  };
}

/// Stages of `expected` missing from `trace` or recorded with other shapes.
inline std::vector<std::string> schedule_mismatches(const std::vector<StageRecord>& trace,
                                                    const std::vector<StageRecord>& expected) {
  std::vector<std::string> bad;
  for (const auto& e : expected) {
    const StageRecord* hit = nullptr;
    for (const auto& t : trace)
      if (t.stage == e.stage) hit = &t;
    if (!hit) bad.push_back(e.stage + ": missing");
    else if (hit->input != e.input || hit->output != e.output)
      bad.push_back(e.stage + ": " + shape_str(hit->input) + " -> " + shape_str(hit->output) + ", expected " +
                    shape_str(e.input) + " -> " + shape_str(e.output));
  }
  return bad;
}

}  // namespace n2::testing
