#include "n2/data/augment.hpp"

#include <algorithm>
#include <cmath>

#include "n2/error.hpp"

namespace n2 {

void AugmentConfig::validate() const {
  for (double p : {rot90_prob, hflip_prob, vflip_prob, elastic_prob, noise_prob})
    if (!(p >= 0 && p <= 1)) throw ConfigError("augment: probabilities must lie in [0,1]");
  if (!(elastic_max_px >= 0) || !(elastic_sigma > 0)) throw ConfigError("augment: elastic_max_px >= 0, elastic_sigma > 0");
  if (!(brightness >= 0) || !(contrast >= 0) || contrast >= 1 || !(noise_sigma >= 0))
    throw ConfigError("augment: brightness, noise_sigma >= 0 and contrast in [0,1)");
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.rot90_prob = c.hflip_prob = c.vflip_prob = c.elastic_prob = c.noise_prob = 0;
  c.elastic_max_px = c.brightness = c.contrast = c.noise_sigma = 0;
  return c;
}

void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = {{"rot90_prob", c.rot90_prob},       {"hflip_prob", c.hflip_prob},   {"vflip_prob", c.vflip_prob},
       {"elastic_prob", c.elastic_prob},   {"elastic_max_px", c.elastic_max_px},
       {"elastic_sigma", c.elastic_sigma}, {"brightness", c.brightness},   {"contrast", c.contrast},
       {"noise_prob", c.noise_prob},       {"noise_sigma", c.noise_sigma}};
}

void from_json(const nlohmann::json& j, AugmentConfig& c) {
  nlohmann::json defaults = c;
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown augment key '" + key + "'");
    defaults[key] = value;
  }
  c.rot90_prob = defaults["rot90_prob"].get<double>();
  c.hflip_prob = defaults["hflip_prob"].get<double>();
  c.vflip_prob = defaults["vflip_prob"].get<double>();
  c.elastic_prob = defaults["elastic_prob"].get<double>();
  c.elastic_max_px = defaults["elastic_max_px"].get<double>();
  c.elastic_sigma = defaults["elastic_sigma"].get<double>();
  c.brightness = defaults["brightness"].get<double>();
  c.contrast = defaults["contrast"].get<double>();
  c.noise_prob = defaults["noise_prob"].get<double>();
  c.noise_sigma = defaults["noise_sigma"].get<double>();
}

std::vector<Real> rot90(const std::vector<Real>& data, std::int64_t planes, std::int64_t h, std::int64_t w, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return data;
  if (k % 2 == 1 && h != w) throw ShapeError("rot90: odd turns need a square slice");
  std::vector<Real> out(data.size());
  const std::int64_t n = h * w;
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        std::int64_t sy = y, sx = x;
        // Output (y, x) reads the source pixel that a CCW turn moves there.
        if (k == 1) { sy = x; sx = w - 1 - y; }
        else if (k == 2) { sy = h - 1 - y; sx = w - 1 - x; }
        else { sy = h - 1 - x; sx = y; }
        out[static_cast<std::size_t>(p * n + y * w + x)] = data[static_cast<std::size_t>(p * n + sy * w + sx)];
      }
  return out;
}

std::vector<Real> flip_horizontal(const std::vector<Real>& data, std::int64_t planes, std::int64_t h, std::int64_t w) {
  std::vector<Real> out(data.size());
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        out[static_cast<std::size_t>((p * h + y) * w + x)] = data[static_cast<std::size_t>((p * h + y) * w + (w - 1 - x))];
  return out;
}

std::vector<Real> flip_vertical(const std::vector<Real>& data, std::int64_t planes, std::int64_t h, std::int64_t w) {
  std::vector<Real> out(data.size());
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      std::copy_n(data.begin() + static_cast<std::ptrdiff_t>((p * h + (h - 1 - y)) * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>((p * h + y) * w));
  return out;
}

namespace {

std::vector<Real> gaussian_kernel(double sigma) {
  const auto r = static_cast<std::int64_t>(std::ceil(3 * sigma));
  std::vector<Real> k(static_cast<std::size_t>(2 * r + 1));
  Real sum = 0;
  for (std::int64_t i = -r; i <= r; ++i) {
    const Real v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable blur with edge clamping.
void blur(std::vector<Real>& f, std::int64_t h, std::int64_t w, const std::vector<Real>& k) {
  const auto r = static_cast<std::int64_t>(k.size() / 2);
  std::vector<Real> tmp(f.size());
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      Real acc = 0;
      for (std::int64_t i = -r; i <= r; ++i)
        acc += k[static_cast<std::size_t>(i + r)] * f[static_cast<std::size_t>(y * w + std::clamp(x + i, std::int64_t{0}, w - 1))];
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      Real acc = 0;
      for (std::int64_t i = -r; i <= r; ++i)
        acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, std::int64_t{0}, h - 1) * w + x)];
      f[static_cast<std::size_t>(y * w + x)] = acc;
    }
}

void elastic(SliceSample& s, const AugmentConfig& cfg, Rng& rng) {
  const std::int64_t h = s.height, w = s.width, n = h * w;
  std::vector<Real> dy(static_cast<std::size_t>(n)), dx(static_cast<std::size_t>(n));
  for (auto& v : dy) v = rng.uniform(-1.0, 1.0);
  for (auto& v : dx) v = rng.uniform(-1.0, 1.0);
  const auto k = gaussian_kernel(cfg.elastic_sigma);
  blur(dy, h, w, k);
  blur(dx, h, w, k);
  Real peak = 0;
  for (std::size_t i = 0; i < dy.size(); ++i) peak = std::max({peak, std::abs(dy[i]), std::abs(dx[i])});
  if (peak <= 0) return;
  const Real gain = cfg.elastic_max_px / peak;

  std::vector<Real> img(s.image.size());
  std::vector<Real> prev(s.prev_mask.size()), gt(s.gt_mask.size());
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y * w + x);
      const Real fy = std::clamp(static_cast<Real>(y) + gain * dy[i], 0.0, static_cast<Real>(h - 1));
      const Real fx = std::clamp(static_cast<Real>(x) + gain * dx[i], 0.0, static_cast<Real>(w - 1));
      const auto y0 = static_cast<std::int64_t>(fy), x0 = static_cast<std::int64_t>(fx);
      const auto y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const Real wy = fy - static_cast<Real>(y0), wx = fx - static_cast<Real>(x0);
      auto at = [&](std::int64_t yy, std::int64_t xx) { return s.image[static_cast<std::size_t>(yy * w + xx)]; };
      img[i] = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) + wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
      const auto ny = static_cast<std::int64_t>(std::lround(fy)), nx = static_cast<std::int64_t>(std::lround(fx));
      for (std::int64_t c = 0; c < s.classes; ++c) {
        const auto src = static_cast<std::size_t>(c * n + ny * w + nx), dst = static_cast<std::size_t>(c * n) + i;
        prev[dst] = s.prev_mask[src];
        gt[dst] = s.gt_mask[src];
      }
    }
  s.image = std::move(img);
  s.prev_mask = std::move(prev);
  s.gt_mask = std::move(gt);
}

}  // namespace

SliceSample augment(const SliceSample& sample, const AugmentConfig& cfg, Rng& rng) {
  SliceSample s = sample;
  const std::int64_t h = s.height, w = s.width, c = s.classes;
  auto geometric = [&](auto&& f) {
    s.image = f(s.image, 1);
    s.prev_mask = f(s.prev_mask, c);
    s.gt_mask = f(s.gt_mask, c);
  };

  if (rng.bernoulli(cfg.rot90_prob)) {
    int k = static_cast<int>(rng.uniform_int(0, 3));
    if (h != w) k = (k / 2) * 2;
    if (k) geometric([&](const std::vector<Real>& d, std::int64_t planes) { return rot90(d, planes, h, w, k); });
  }
  if (rng.bernoulli(cfg.hflip_prob))
    geometric([&](const std::vector<Real>& d, std::int64_t planes) { return flip_horizontal(d, planes, h, w); });
  if (rng.bernoulli(cfg.vflip_prob))
    geometric([&](const std::vector<Real>& d, std::int64_t planes) { return flip_vertical(d, planes, h, w); });
  if (rng.bernoulli(cfg.elastic_prob) && cfg.elastic_max_px > 0) elastic(s, cfg, rng);
  if (cfg.brightness > 0 || cfg.contrast > 0) {
    const Real gain = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
    const Real shift = rng.uniform(-cfg.brightness, cfg.brightness);
    for (auto& v : s.image) v = v * gain + shift;
  }
  if (rng.bernoulli(cfg.noise_prob) && cfg.noise_sigma > 0)
    for (auto& v : s.image) v += cfg.noise_sigma * rng.normal();

  for (auto* m : {&s.prev_mask, &s.gt_mask})
    for (auto& v : *m) v = v >= 0.5 ? 1.0 : 0.0;
  s.refresh_presence();
  return s;
}

}  // namespace n2
