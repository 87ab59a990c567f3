#include "n2/model/config.hpp"

#include <algorithm>

#include "n2/error.hpp"

namespace n2 {

std::string to_string(GatingMode mode) {
  switch (mode) {
    case GatingMode::none: return "none";
    case GatingMode::soft: return "soft";
    case GatingMode::hard: return "hard";
  }
  return "none";
}

GatingMode parse_gating_mode(const std::string& text) {
  if (text == "none") return GatingMode::none;
  if (text == "soft") return GatingMode::soft;
  if (text == "hard") return GatingMode::hard;
  throw ConfigError("unknown gating mode '" + text + "' (expected none, soft or hard)");
}

StageGeometry ModelConfig::block_geometry(int stage) const {
  if (stage < 1 || stage > 4) throw ConfigError("encoder stage must be in 1..4, got " + std::to_string(stage));
  const int level = std::min(stage - 1, 3);
  return {grid_h() >> level, grid_w() >> level, embed_dim << level};
}

StageGeometry ModelConfig::stage_output(int stage) const {
  if (stage < 1 || stage > 4) throw ConfigError("encoder stage must be in 1..4, got " + std::to_string(stage));
  const int level = std::min(stage, 3);
  return {grid_h() >> level, grid_w() >> level, embed_dim << level};
}

std::int64_t ModelConfig::effective_window(const StageGeometry& g) const {
  return std::min({window_size, g.grid_h, g.grid_w});
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (patch_h < 1 || patch_w < 1) fail("patch size must be positive");
  if (image_h % patch_h != 0) fail("image height " + std::to_string(image_h) + " not divisible by patch height " + std::to_string(patch_h));
  if (image_w % patch_w != 0) fail("image width " + std::to_string(image_w) + " not divisible by patch width " + std::to_string(patch_w));
  if (grid_h() % 8 != 0 || grid_w() % 8 != 0)
    fail("token grid " + std::to_string(grid_h()) + "x" + std::to_string(grid_w()) +
         " must be divisible by 8 for three patch merges");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (window_size < 1) fail("window_size must be >= 1");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (detection_hidden < 1) fail("detection_hidden must be >= 1");
  for (int s = 1; s <= 4; ++s) {
    if (stage_depths[s - 1] < 1) fail("stage " + std::to_string(s) + " depth must be >= 1");
    const auto g = block_geometry(s);
    const auto w = effective_window(g);
    if (g.grid_h % w != 0 || g.grid_w % w != 0)
      fail("stage " + std::to_string(s) + " grid " + std::to_string(g.grid_h) + "x" +
           std::to_string(g.grid_w) + " not divisible by window " + std::to_string(w));
    if (num_heads[s - 1] < 1 || g.channels % num_heads[s - 1] != 0)
      fail("stage " + std::to_string(s) + ": " + std::to_string(num_heads[s - 1]) +
           " heads do not divide " + std::to_string(g.channels) + " channels");
  }
  if (num_classes < 1 || num_roi < 1) fail("num_classes and num_roi must be >= 1");
  if (num_classes != num_roi && num_classes != 1)
    fail("num_classes " + std::to_string(num_classes) + " vs num_roi " + std::to_string(num_roi) +
         ": per-class gating needs equal counts (or a single segmentation class)");
  if (!(gating_threshold >= 0.0 && gating_threshold <= 1.0)) fail("gating_threshold must lie in [0,1]");
}

ModelConfig ModelConfig::reference() {
  ModelConfig c;
  c.num_classes = 1;
  c.num_roi = 3;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.image_h = c.image_w = 32;
  c.patch_h = c.patch_w = 4;
  c.embed_dim = 16;
  c.stage_depths = {1, 1, 1, 1};
  c.num_heads = {1, 2, 4, 8};
  c.window_size = 2;
  c.mlp_ratio = 2;
  c.detection_hidden = 16;
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"in_channels", c.in_channels},
                     {"image_size", {c.image_h, c.image_w}},
                     {"patch_size", {c.patch_h, c.patch_w}},
                     {"embed_dim", c.embed_dim},
                     {"stage_depths", c.stage_depths},
                     {"num_heads", c.num_heads},
                     {"window_size", c.window_size},
                     {"mlp_ratio", c.mlp_ratio},
                     {"detection_hidden", c.detection_hidden},
                     {"num_classes", c.num_classes},
                     {"num_roi", c.num_roi},
                     {"context_enabled", c.context_enabled},
                     {"gating_mode", to_string(c.gating_mode)},
                     {"gating_threshold", c.gating_threshold},
                     {"detection_context_free", c.detection_context_free}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::vector<std::string> known{
      "in_channels", "image_size", "patch_size", "embed_dim", "stage_depths",
      "num_heads", "window_size", "mlp_ratio", "detection_hidden", "num_classes",
      "num_roi", "context_enabled", "gating_mode", "gating_threshold", "detection_context_free"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown model config key '" + key + "'");
  try {
    auto pair = [&](const char* key, std::int64_t& a, std::int64_t& b) {
      if (!j.contains(key)) return;
      const auto& v = j.at(key);
      if (v.is_array()) {
        if (v.size() != 2) throw ConfigError(std::string(key) + " must have two entries");
        a = v[0].get<std::int64_t>();
        b = v[1].get<std::int64_t>();
      } else {
        a = b = v.get<std::int64_t>();
      }
    };
    pair("image_size", c.image_h, c.image_w);
    pair("patch_size", c.patch_h, c.patch_w);
    auto four = [&](const char* key, std::array<int, 4>& dst) {
      if (!j.contains(key)) return;
      const auto v = j.at(key).get<std::vector<int>>();
      if (v.size() != 4) throw ConfigError(std::string(key) + " must have exactly 4 entries");
      std::copy(v.begin(), v.end(), dst.begin());
    };
    four("stage_depths", c.stage_depths);
    four("num_heads", c.num_heads);
    if (j.contains("in_channels")) c.in_channels = j.at("in_channels").get<std::int64_t>();
    if (j.contains("embed_dim")) c.embed_dim = j.at("embed_dim").get<std::int64_t>();
    if (j.contains("window_size")) c.window_size = j.at("window_size").get<std::int64_t>();
    if (j.contains("mlp_ratio")) c.mlp_ratio = j.at("mlp_ratio").get<int>();
    if (j.contains("detection_hidden")) c.detection_hidden = j.at("detection_hidden").get<std::int64_t>();
    if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<std::int64_t>();
    if (j.contains("num_roi")) c.num_roi = j.at("num_roi").get<std::int64_t>();
    if (j.contains("context_enabled")) c.context_enabled = j.at("context_enabled").get<bool>();
    if (j.contains("gating_mode")) c.gating_mode = parse_gating_mode(j.at("gating_mode").get<std::string>());
    if (j.contains("gating_threshold")) c.gating_threshold = j.at("gating_threshold").get<double>();
    if (j.contains("detection_context_free"))
      c.detection_context_free = j.at("detection_context_free").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

}  // namespace n2
