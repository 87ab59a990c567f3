#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace n2 {

enum class GatingMode { none, soft, hard };

std::string to_string(GatingMode mode);
GatingMode parse_gating_mode(const std::string& text);

/// Token-grid geometry at one point of the network.
struct StageGeometry {
  std::int64_t grid_h = 0;
  std::int64_t grid_w = 0;
  std::int64_t channels = 0;
  std::int64_t tokens() const { return grid_h * grid_w; }
};

struct ModelConfig {
  std::int64_t in_channels = 1;
  std::int64_t image_h = 256;
  std::int64_t image_w = 256;
  std::int64_t patch_h = 4;
  std::int64_t patch_w = 4;
  std::int64_t embed_dim = 96;
  std::array<int, 4> stage_depths{2, 2, 6, 2};
  std::array<int, 4> num_heads{3, 6, 12, 24};
  std::int64_t window_size = 8;
  int mlp_ratio = 4;
  std::int64_t detection_hidden = 256;
  std::int64_t num_classes = 3;
  std::int64_t num_roi = 3;
  bool context_enabled = true;
  GatingMode gating_mode = GatingMode::hard;
  double gating_threshold = 0.5;
  bool detection_context_free = true;

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;

  std::int64_t grid_h() const { return image_h / patch_h; }
  std::int64_t grid_w() const { return image_w / patch_w; }

  /// Geometry the swin blocks of encoder stage s (1..4) operate on.
  StageGeometry block_geometry(int stage) const;
  /// Geometry after encoder stage s, i.e. after its patch merge (stage 4
  /// keeps the stage-3 output geometry).
  StageGeometry stage_output(int stage) const;
  /// Attention window actually used on a grid: the configured window, or the
  /// whole grid when the grid is smaller.
  std::int64_t effective_window(const StageGeometry& g) const;

  /// Full-size reference: (1,256,256) input, patch 4, D=96, one class.
  static ModelConfig reference();
  /// Small CPU configuration used by tests and desk experiments.
  static ModelConfig tiny();
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace n2
