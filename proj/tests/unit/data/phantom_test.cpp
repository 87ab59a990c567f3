#include "doctest.h"
#include "test_support.hpp"

#include "n2/data/phantom.hpp"
#include "n2/error.hpp"

using namespace n2;

namespace {

PhantomSpec single_class(std::int64_t z0, std::int64_t len) {
  PhantomSpec s;
  s.depth = 32;
  s.height = s.width = 48;
  s.noise_sigma = 0.1;
  s.seed = 11;
  PhantomClass c;
  c.name = "target";
  c.center_y = {20, 28};
  c.center_x = {18, 30};
  c.radius_y = {4, 9};
  c.radius_x = {5, 8};
  c.z_start = {static_cast<double>(z0), static_cast<double>(z0)};
  c.z_length = {static_cast<double>(len), static_cast<double>(len)};
  s.classes = {c};
  return s;
}

}  // namespace

TEST_CASE("structure spans exactly the drawn slices") {
  const auto v = generate_phantom(single_class(10, 10), "p");
  for (std::int64_t z = 0; z < v.depth; ++z) CHECK(v.present(0, z) == (z >= 10 && z < 20));
}

TEST_CASE("masks equal a brute-force ellipsoid scan") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto spec = PhantomSpec::pelvis(24, 40, 40, seed);
    const auto shapes = draw_ellipsoids(spec);
    const auto v = generate_phantom(spec, "p");
    for (std::size_t c = 0; c < shapes.size(); ++c) {
      const auto& e = shapes[c];
      std::int64_t expected = 0, got = 0;
      bool same = true;
      for (std::int64_t z = 0; z < v.depth; ++z)
        for (std::int64_t y = 0; y < v.height; ++y)
          for (std::int64_t x = 0; x < v.width; ++x) {
            const double a = (z - e.cz) / e.rz, b = (y - e.cy) / e.ry, d = (x - e.cx) / e.rx;
            const bool in = a * a + b * b + d * d <= 1.0;
            expected += in;
            got += v.mask(static_cast<std::int64_t>(c), z, y, x);
            same = same && (in == (v.mask(static_cast<std::int64_t>(c), z, y, x) == 1));
          }
      CHECK(same);
      CHECK(got == expected);
      for (std::int64_t z = 0; z < v.depth; ++z)
        CHECK(v.present(static_cast<std::int64_t>(c), z) == (z >= e.z0 && z < e.z1));
    }
  }
}

TEST_CASE("every volume has absent slices at both ends") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = generate_phantom(PhantomSpec::pelvis(32, 32, 32, seed), "p");
    for (std::int64_t c = 0; c < v.num_classes(); ++c) {
      CHECK_FALSE(v.present(c, 0));
      CHECK_FALSE(v.present(c, v.depth - 1));
    }
  }
}

TEST_CASE("generation is deterministic per seed") {
  const auto a = generate_phantom(PhantomSpec::pelvis(16, 32, 32, 5), "a");
  const auto b = generate_phantom(PhantomSpec::pelvis(16, 32, 32, 5), "a");
  const auto c = generate_phantom(PhantomSpec::pelvis(16, 32, 32, 6), "a");
  CHECK(a.image == b.image);
  CHECK(a.masks == b.masks);
  CHECK(a.image != c.image);
}

TEST_CASE("zero noise, contrast and body give a constant image") {
  auto spec = single_class(5, 4);
  spec.noise_sigma = 0;
  spec.body_intensity = 0;
  spec.classes[0].contrast = 0;
  const auto v = generate_phantom(spec, "p");
  for (double x : v.image) REQUIRE(x == 0.0);
  CHECK(v.present(0, 6));
}

TEST_CASE("intensities are float-exact") {
  const auto v = generate_phantom(PhantomSpec::pelvis(12, 16, 16, 2), "p");
  for (double x : v.image) REQUIRE(static_cast<double>(static_cast<float>(x)) == x);
}

TEST_CASE("spec validation") {
  auto spec = single_class(10, 10);
  SUBCASE("degenerate radius") {
    spec.classes[0].radius_y = {0, 3};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }
  SUBCASE("extent touching the first slice") {
    spec.classes[0].z_start = {0, 2};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }
  SUBCASE("extent touching the last slice") {
    spec.classes[0].z_start = {20, 22};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }
  SUBCASE("center outside the image") {
    spec.classes[0].center_x = {10, 60};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }
  SUBCASE("no classes") {
    spec.classes.clear();
    CHECK_THROWS_AS(generate_phantom(spec, "p"), ConfigError);
  }
}

TEST_CASE("spec JSON round trip") {
  const auto spec = PhantomSpec::pelvis(20, 24, 28, 9);
  const auto back = nlohmann::json(spec).get<PhantomSpec>();
  CHECK(nlohmann::json(back) == nlohmann::json(spec));
  CHECK(generate_phantom(back, "x").image == generate_phantom(spec, "x").image);
}

TEST_CASE("volume save and load round trip") {
  const auto dir = testing::temp_dir("volume_io");
  auto v = generate_phantom(PhantomSpec::pelvis(12, 20, 24, 3), "subj");
  save_volume(dir, v);
  const auto back = load_volume(dir);
  CHECK(back.subject_id == "subj");
  CHECK(back.image == v.image);
  CHECK(back.masks == v.masks);
  CHECK(back.class_names == v.class_names);
  CHECK(back.spacing == v.spacing);
}

TEST_CASE("volume validation rejects non-binary masks") {
  auto v = generate_phantom(PhantomSpec::pelvis(12, 16, 16, 3), "p");
  v.masks[5] = 2;
  CHECK_THROWS_AS(v.validate(), DataError);
}

TEST_CASE("class selection leaves missing names empty") {
  const auto v = generate_phantom(PhantomSpec::pelvis(12, 16, 16, 3), "p");
  std::vector<std::string> missing;
  const auto s = select_classes(v, {"rectum", "femur"}, &missing);
  CHECK(s.class_names == std::vector<std::string>{"rectum", "femur"});
  CHECK(missing == std::vector<std::string>{"femur"});
  const auto plane = static_cast<std::size_t>(v.depth * v.slice_size());
  CHECK(std::equal(s.masks.begin(), s.masks.begin() + plane, v.masks.begin() + 2 * plane));
  CHECK(std::all_of(s.masks.begin() + plane, s.masks.end(), [](auto m) { return m == 0; }));
}
