#pragma once

#include <nlohmann/json.hpp>

#include "n2/data/samples.hpp"
#include "n2/random.hpp"

namespace n2 {

struct AugmentConfig {
  double rot90_prob = 1.0;     // chance of drawing k in {0..3} (else k = 0)
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double elastic_prob = 0.5;
  double elastic_max_px = 3.0;   // peak displacement after smoothing
  double elastic_sigma = 6.0;    // Gaussian smoothing of the field, pixels
  double brightness = 0.1;       // additive shift drawn from [-a, a]
  double contrast = 0.1;         // gain drawn from [1 - a, 1 + a]
  double noise_prob = 0.5;
  double noise_sigma = 0.05;

  void validate() const;
  /// Every probability and amplitude zero.
  static AugmentConfig none();
};

void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);

/// Counter-clockwise quarter turns of a (planes, h, w) stack; h == w.
std::vector<Real> rot90(const std::vector<Real>& data, std::int64_t planes, std::int64_t h, std::int64_t w, int k);
std::vector<Real> flip_horizontal(const std::vector<Real>& data, std::int64_t planes, std::int64_t h, std::int64_t w);
std::vector<Real> flip_vertical(const std::vector<Real>& data, std::int64_t planes, std::int64_t h, std::int64_t w);

/// One stochastic draw, in order: rot90, horizontal flip, vertical flip,
/// elastic warp (image bilinear, masks nearest), brightness/contrast and
/// Gaussian noise (image only). Geometric steps hit image, context and
/// ground truth identically; masks stay binary and presence is refreshed.
/// Odd quarter turns are skipped on non-square slices.
SliceSample augment(const SliceSample& sample, const AugmentConfig& config, Rng& rng);

}  // namespace n2
