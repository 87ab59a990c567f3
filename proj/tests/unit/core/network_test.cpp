#include "doctest.h"
#include "model_checks.hpp"
#include "test_support.hpp"

#include "n2/error.hpp"
#include "n2/model/network.hpp"

using namespace n2;
using n2::testing::random_binary;
using n2::testing::random_tensor;

namespace {

ModelConfig shifted_tiny() {
  auto c = ModelConfig::tiny();
  c.stage_depths = {2, 2, 2, 2};
  return c;
}

// Scales the reference schedule down to a tiny configuration: every token
// count and channel width follows from grid and embed ratios.
std::vector<StageRecord> tiny_schedule(const ModelConfig& c, std::int64_t b) {
  const std::int64_t g = c.grid_h() * c.grid_w(), d = c.embed_dim, k = c.num_classes;
  return {
      {"patch_embed", {b, 1, c.image_h, c.image_w}, {b, g, d}},
      {"encoder.1", {b, g, d}, {b, g / 4, 2 * d}},
      {"encoder.2", {b, g / 4, 2 * d}, {b, g / 16, 4 * d}},
      {"encoder.3", {b, g / 16, 4 * d}, {b, g / 64, 8 * d}},
      {"encoder.4", {b, g / 64, 8 * d}, {b, g / 64, 8 * d}},
      {"detection_head", {b, g / 64, 8 * d}, {b, c.num_roi}},
      {"decoder.4", {b, g / 64, 8 * d}, {b, g / 16, 4 * d}},
      {"decoder.3", {b, g / 16, 4 * d}, {b, g / 4, 2 * d}},
      {"decoder.2", {b, g / 4, 2 * d}, {b, g, d}},
      {"decoder.1", {b, g, d}, {b, g, d}},
      {"seg_head.project", {b, g, d}, {b, g, k}},
      {"seg_head.reshape", {b, g, k}, {b, k, c.grid_h(), c.grid_w()}},
      {"seg_head.upsample", {b, k, c.grid_h(), c.grid_w()}, {b, k, c.image_h, c.image_w}},
  };
}

}  // namespace

TEST_CASE("tiny forward follows the scaled stage schedule") {
  const auto cfg = ModelConfig::tiny();
  N2Network net(cfg, 3);
  Rng rng(1);
  const auto out = net.forward(random_tensor({2, 1, 32, 32}, rng), random_binary({2, 3, 32, 32}, rng),
                               {.detection = true, .trace = true});
  CHECK(out.seg_logits.shape() == Shape{2, 3, 32, 32});
  CHECK(out.det_logits.shape() == Shape{2, 3});
  const auto bad = testing::schedule_mismatches(out.trace, tiny_schedule(cfg, 2));
  CHECK_MESSAGE(bad.empty(), (bad.empty() ? "" : bad.front()));
  for (int s = 1; s <= 4; ++s) {
    bool found = false;
    for (const auto& t : out.trace) found |= t.stage == "context_fuse." + std::to_string(s);
    CHECK(found);
  }
}

TEST_CASE("reference configuration builds the full-size schedule") {
  const auto cfg = ModelConfig::reference();
  CHECK(cfg.grid_h() == 64);
  CHECK(cfg.block_geometry(1).tokens() == 4096);
  CHECK(cfg.block_geometry(1).channels == 96);
  CHECK(cfg.stage_output(1).tokens() == 1024);
  CHECK(cfg.stage_output(1).channels == 192);
  CHECK(cfg.stage_output(2).channels == 384);
  CHECK(cfg.stage_output(3).tokens() == 64);
  CHECK(cfg.stage_output(3).channels == 768);
  CHECK(cfg.stage_output(4).tokens() == 64);
  CHECK(cfg.stage_output(4).channels == 768);
  CHECK(cfg.effective_window(cfg.stage_output(3)) == 8);
}

TEST_CASE("construction and forward are deterministic per seed") {
  const auto cfg = shifted_tiny();
  N2Network a(cfg, 11), b(cfg, 11), c(cfg, 12);
  Rng rng(2);
  const auto img = random_tensor({1, 1, 32, 32}, rng);
  const auto prev = random_binary({1, 3, 32, 32}, rng);
  const auto oa = a.forward(img, prev), ob = b.forward(img, prev), oc = c.forward(img, prev);
  CHECK(testing::bitwise_equal(oa.seg_logits.values(), ob.seg_logits.values()));
  CHECK(testing::bitwise_equal(oa.det_logits.values(), ob.det_logits.values()));
  CHECK_FALSE(testing::bitwise_equal(oa.seg_logits.values(), oc.seg_logits.values()));
}

TEST_CASE("context-free detection ignores the previous mask") {
  const auto cfg = ModelConfig::tiny();
  N2Network net(cfg, 5);
  Rng rng(3);
  const auto img = random_tensor({1, 1, 32, 32}, rng);
  const auto o1 = net.forward(img, random_binary({1, 3, 32, 32}, rng));
  const auto o2 = net.forward(img, random_binary({1, 3, 32, 32}, rng));
  CHECK(testing::bitwise_equal(o1.det_logits.values(), o2.det_logits.values()));
  CHECK_FALSE(testing::bitwise_equal(o1.seg_logits.values(), o2.seg_logits.values()));

  auto fused_cfg = cfg;
  fused_cfg.detection_context_free = false;
  N2Network fused(fused_cfg, 5);
  const auto f1 = fused.forward(img, random_binary({1, 3, 32, 32}, rng));
  const auto f2 = fused.forward(img, random_binary({1, 3, 32, 32}, rng));
  CHECK_FALSE(testing::bitwise_equal(f1.det_logits.values(), f2.det_logits.values()));
}

TEST_CASE("zero context through a zero-bias context path equals a context-free model") {
  auto cfg = shifted_tiny();
  N2Network with(cfg, 21);
  cfg.context_enabled = false;
  N2Network without(cfg, 22);
  Rng rng(4);
  for (const auto& [name, t] : with.params().entries()) {
    const bool context_bias = (name.rfind("context.", 0) == 0 && name.ends_with(".bias")) ||
                              name.ends_with("norm_kv.beta") || name.ends_with(".v.bias") ||
                              (name.ends_with(".proj.bias") && name.rfind("fuse.", 0) == 0);
    for (auto& v : Tensor(t).mutable_values()) v = context_bias ? 0.0 : v + 0.1 * rng.normal();
  }
  std::size_t copied = 0;
  for (const auto& [name, t] : without.params().entries()) {
    REQUIRE(with.params().contains(name));
    const auto src = with.params().get(name).values();
    std::copy(src.begin(), src.end(), Tensor(t).mutable_values().begin());
    ++copied;
  }
  CHECK(copied < with.params().size());
  const auto img = random_tensor({2, 1, 32, 32}, rng);
  const auto a = with.forward(img, Tensor::zeros({2, 3, 32, 32}));
  const auto b = without.forward(img, {});
  CHECK(testing::bitwise_equal(a.seg_logits.values(), b.seg_logits.values()));
  CHECK(testing::bitwise_equal(a.det_logits.values(), b.det_logits.values()));
}

TEST_CASE("full-model gradients match finite differences") {
  for (const auto& cfg : {ModelConfig::tiny(), shifted_tiny()}) {
    const auto r = testing::full_model_gradcheck(cfg, 31, 24, 1e-3);
    CHECK(r.result.checked == 24);
    CHECK_MESSAGE(r.worst_params.empty(), (r.worst_params.empty() ? "" : r.worst_params.front()));
  }
}

TEST_CASE("skipping detection leaves detection parameters without gradient") {
  N2Network net(ModelConfig::tiny(), 7);
  Rng rng(5);
  const auto out = net.forward(random_tensor({1, 1, 32, 32}, rng), random_binary({1, 3, 32, 32}, rng),
                               {.detection = false});
  CHECK_FALSE(out.det_logits.defined());
  testing::weighted_sum(out.seg_logits, random_tensor({1, 3, 32, 32}, rng)).backward();
  CHECK_FALSE(net.params().get("detect.fc2.weight").has_grad());
  CHECK(net.params().get("seg_head.proj.weight").has_grad());
}

TEST_CASE("forward rejects mismatched inputs") {
  N2Network net(ModelConfig::tiny(), 1);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 1, 32, 32}), Tensor::zeros({1, 2, 32, 32})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 2, 32, 32}), Tensor::zeros({1, 3, 32, 32})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 1, 30, 32}), Tensor::zeros({1, 3, 30, 32})), ShapeError);
  auto bad = ModelConfig::tiny();
  bad.window_size = 3;
  CHECK_THROWS_AS(N2Network(bad, 1), ConfigError);
}

TEST_CASE("predict applies the configured gating") {
  auto cfg = ModelConfig::tiny();
  N2Network net(cfg, 9);
  // force every detection probability to logistic(-50)
  auto w = Tensor(net.params().get("detect.fc2.weight")).mutable_values();
  std::fill(w.begin(), w.end(), 0.0);
  auto b = Tensor(net.params().get("detect.fc2.bias")).mutable_values();
  std::fill(b.begin(), b.end(), -50.0);
  Rng rng(6);
  const auto img = random_tensor({2, 1, 32, 32}, rng);
  const auto prev = random_binary({2, 3, 32, 32}, rng);
  const auto hard = net.predict(img, prev, GatingMode::hard, 0.5);
  CHECK(std::all_of(hard.seg_probs.values().begin(), hard.seg_probs.values().end(), [](double v) { return v == 0.0; }));
  const auto none = net.predict(img, prev, GatingMode::none, 0.5);
  CHECK(std::any_of(none.seg_probs.values().begin(), none.seg_probs.values().end(), [](double v) { return v > 0.0; }));
  CHECK(grad_enabled());
}
