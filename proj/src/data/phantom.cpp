#include "n2/data/phantom.hpp"

#include <cmath>

#include "n2/error.hpp"
#include "n2/random.hpp"

namespace n2 {

void to_json(nlohmann::json& j, const Range& r) { j = nlohmann::json::array({r.lo, r.hi}); }

void from_json(const nlohmann::json& j, Range& r) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("phantom range must be [lo, hi]");
  r.lo = j[0].get<double>();
  r.hi = j[1].get<double>();
}

namespace {

std::int64_t draw_int(Rng& rng, const Range& r) {
  return rng.uniform_int(static_cast<std::int64_t>(std::llround(r.lo)), static_cast<std::int64_t>(std::llround(r.hi)));
}

}  // namespace

void PhantomSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("phantom spec: " + m); };
  if (depth < 3 || height < 1 || width < 1) fail("volume shape must be at least 3x1x1");
  if (!(noise_sigma >= 0)) fail("noise_sigma must be >= 0");
  if (classes.empty()) fail("at least one class is required");
  for (const auto& c : classes) {
    const std::string p = "class '" + c.name + "': ";
    for (const Range* r : {&c.center_y, &c.center_x, &c.radius_y, &c.radius_x, &c.z_start, &c.z_length})
      if (!(r->lo <= r->hi)) fail(p + "range with lo > hi");
    if (!(c.radius_y.lo > 0) || !(c.radius_x.lo > 0)) fail(p + "degenerate radius");
    if (std::llround(c.z_length.lo) < 1) fail(p + "z_length must be >= 1");
    if (std::llround(c.z_start.lo) < 1 || std::llround(c.z_start.hi) + std::llround(c.z_length.hi) > depth - 1)
      fail(p + "z extent must stay strictly inside the volume so absent slices exist at both ends");
    if (c.center_y.lo < 0 || c.center_y.hi > static_cast<double>(height - 1) || c.center_x.lo < 0 ||
        c.center_x.hi > static_cast<double>(width - 1))
      fail(p + "center range outside the image");
  }
}

PhantomSpec PhantomSpec::pelvis(std::int64_t depth, std::int64_t height, std::int64_t width, std::uint64_t seed) {
  PhantomSpec s;
  s.depth = depth;
  s.height = height;
  s.width = width;
  s.seed = seed;
  const auto h = static_cast<double>(height), w = static_cast<double>(width), z = static_cast<double>(depth);
  auto zr = [&](double lo, double hi) { return Range{std::round(lo * z), std::round(hi * z)}; };
  s.classes = {
      {"prostate", {0.52 * h, 0.58 * h}, {0.46 * w, 0.54 * w}, {0.07 * h, 0.10 * h}, {0.08 * w, 0.11 * w},
       zr(0.08, 0.22), zr(0.25, 0.40), 0.6},
      {"bladder", {0.30 * h, 0.36 * h}, {0.45 * w, 0.55 * w}, {0.10 * h, 0.14 * h}, {0.12 * w, 0.16 * w},
       zr(0.38, 0.48), zr(0.30, 0.45), 0.45},
      {"rectum", {0.72 * h, 0.76 * h}, {0.47 * w, 0.53 * w}, {0.05 * h, 0.07 * h}, {0.06 * w, 0.08 * w},
       zr(0.06, 0.20), zr(0.40, 0.60), -0.5},
  };
  s.validate();
  return s;
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = nlohmann::json{{"shape", {s.depth, s.height, s.width}}, {"spacing", s.spacing},
                     {"body_intensity", s.body_intensity}, {"noise_sigma", s.noise_sigma}, {"seed", s.seed}};
  auto& cls = j["classes"] = nlohmann::json::array();
  for (const auto& c : s.classes) {
    nlohmann::json cj;
    cj["name"] = c.name;
    cj["center_y"] = c.center_y;
    cj["center_x"] = c.center_x;
    cj["radius_y"] = c.radius_y;
    cj["radius_x"] = c.radius_x;
    cj["z_start"] = c.z_start;
    cj["z_length"] = c.z_length;
    cj["contrast"] = c.contrast;
    cls.push_back(cj);
  }
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
  const auto shape = j.at("shape").get<std::vector<std::int64_t>>();
  if (shape.size() != 3) throw ConfigError("phantom shape must be [Z, H, W]");
  s.depth = shape[0];
  s.height = shape[1];
  s.width = shape[2];
  s.spacing = j.at("spacing").get<std::array<double, 3>>();
  s.body_intensity = j.at("body_intensity").get<double>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.classes.clear();
  for (const auto& cj : j.at("classes")) {
    PhantomClass c;
    c.name = cj.at("name").get<std::string>();
    c.center_y = cj.at("center_y").get<Range>();
    c.center_x = cj.at("center_x").get<Range>();
    c.radius_y = cj.at("radius_y").get<Range>();
    c.radius_x = cj.at("radius_x").get<Range>();
    c.z_start = cj.at("z_start").get<Range>();
    c.z_length = cj.at("z_length").get<Range>();
    c.contrast = cj.at("contrast").get<double>();
    s.classes.push_back(c);
  }
}

std::vector<Ellipsoid> draw_ellipsoids(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {hash_string("phantom.structures")}));
  std::vector<Ellipsoid> out;
  for (const auto& c : spec.classes) {
    Ellipsoid e;
    e.cy = static_cast<double>(draw_int(rng, c.center_y));
    e.cx = static_cast<double>(draw_int(rng, c.center_x));
    e.ry = rng.uniform(c.radius_y.lo, c.radius_y.hi);
    e.rx = rng.uniform(c.radius_x.lo, c.radius_x.hi);
    e.z0 = draw_int(rng, c.z_start);
    e.z1 = e.z0 + draw_int(rng, c.z_length);
    // Slice z0 and z1-1 sit at normalized distance (len-1)/len < 1 from the
    // center; z0-1 and z1 at (len+1)/len > 1.
    e.cz = static_cast<double>(e.z0 + e.z1 - 1) / 2.0;
    e.rz = static_cast<double>(e.z1 - e.z0) / 2.0;
    out.push_back(e);
  }
  return out;
}

VolumeRecord generate_phantom(const PhantomSpec& spec, const std::string& subject_id) {
  const auto shapes = draw_ellipsoids(spec);
  VolumeRecord v;
  v.subject_id = subject_id;
  v.depth = spec.depth;
  v.height = spec.height;
  v.width = spec.width;
  v.spacing = spec.spacing;
  for (const auto& c : spec.classes) v.class_names.push_back(c.name);
  v.image.assign(static_cast<std::size_t>(v.depth * v.height * v.width), 0.0);
  v.masks.assign(v.image.size() * spec.classes.size(), 0);
  v.source = {{"generator", "phantom"}, {"spec", spec}};

  const double by = 0.5 * static_cast<double>(v.height - 1), bx = 0.5 * static_cast<double>(v.width - 1);
  const double bry = 0.42 * static_cast<double>(v.height), brx = 0.46 * static_cast<double>(v.width);
  Rng noise(derive_seed(spec.seed, {hash_string("phantom.noise")}));
  for (std::int64_t z = 0; z < v.depth; ++z)
    for (std::int64_t y = 0; y < v.height; ++y)
      for (std::int64_t x = 0; x < v.width; ++x) {
        const double yy = static_cast<double>(y), xx = static_cast<double>(x), zz = static_cast<double>(z);
        const double dy = (yy - by) / bry, dx = (xx - bx) / brx;
        double value = dy * dy + dx * dx <= 1.0 ? spec.body_intensity : 0.0;
        for (std::size_t c = 0; c < shapes.size(); ++c) {
          const auto& e = shapes[c];
          const double a = (zz - e.cz) / e.rz, b = (yy - e.cy) / e.ry, d = (xx - e.cx) / e.rx;
          if (a * a + b * b + d * d <= 1.0) {
            v.mask(static_cast<std::int64_t>(c), z, y, x) = 1;
            value += spec.classes[c].contrast;
          }
        }
        value += spec.noise_sigma * noise.normal();
        v.voxel(z, y, x) = static_cast<double>(static_cast<float>(value));
      }
  return v;
}

}  // namespace n2
