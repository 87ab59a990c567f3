#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2/data/volume.hpp"

namespace n2 {

struct Range {
  double lo = 0;
  double hi = 0;
};

void to_json(nlohmann::json& j, const Range& r);
void from_json(const nlohmann::json& j, Range& r);

/// One ellipsoidal structure. Centers, starts and lengths are drawn as
/// integers; radii as reals. All in voxels.
struct PhantomClass {
  std::string name;
  Range center_y, center_x;
  Range radius_y, radius_x;
  Range z_start;   // first slice containing the structure
  Range z_length;  // number of slices containing it
  double contrast = 0.5;
};

struct PhantomSpec {
  std::int64_t depth = 32;
  std::int64_t height = 128;
  std::int64_t width = 128;
  std::array<double, 3> spacing{3.0, 1.0, 1.0};
  std::vector<PhantomClass> classes;
  /// Intensity of the elliptical body outline, present on every slice.
  double body_intensity = 1.0;
  double noise_sigma = 0.2;
  std::uint64_t seed = 0;

  /// Throws ConfigError for degenerate radii or an extent range that could
  /// touch the first or last slice.
  void validate() const;

  /// Prostate, bladder and rectum laid out like an axial pelvis, scaled to
  /// the requested geometry.
  static PhantomSpec pelvis(std::int64_t depth, std::int64_t height, std::int64_t width,
                            std::uint64_t seed);
};

void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);

/// Structure parameters actually drawn for one volume.
struct Ellipsoid {
  double cz = 0, cy = 0, cx = 0;
  double rz = 0, ry = 0, rx = 0;
  std::int64_t z0 = 0, z1 = 0;  // present on slices [z0, z1)
};

/// Draws the per-class ellipsoids of a spec (first step of generation).
std::vector<Ellipsoid> draw_ellipsoids(const PhantomSpec& spec);

/// Gaussian-noise background, body outline, one ellipsoid per class
/// brightened by its contrast; masks are the exact ellipsoid interiors, so
/// class c is present on exactly the slices [z0, z1) of its draw.
/// Deterministic per spec (including seed). Intensities are float-exact.
VolumeRecord generate_phantom(const PhantomSpec& spec, const std::string& subject_id);

}  // namespace n2
