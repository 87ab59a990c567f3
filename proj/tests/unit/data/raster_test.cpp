#include "doctest.h"
#include "ingestion_checks.hpp"
#include "n2/random.hpp"

using namespace n2;

TEST_CASE("even-odd fill matches the crossing-number oracle") {
  for (const auto& c : testing::contour_suite()) {
    CAPTURE(c.name);
    CHECK(rasterize_even_odd(c.polygons, testing::kSuiteSize, testing::kSuiteSize) ==
          testing::pnpoly_fill(c.polygons, testing::kSuiteSize, testing::kSuiteSize));
  }
}

TEST_CASE("oracle agreement on random polygons") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<Polygon> polys(static_cast<std::size_t>(rng.uniform_int(1, 3)));
    for (auto& p : polys) {
      const auto n = rng.uniform_int(3, 9);
      for (std::int64_t i = 0; i < n; ++i) {
        // Half of the vertices land on the integer lattice to hit edge cases.
        double x = rng.uniform(-4, 24), y = rng.uniform(-4, 24);
        if (rng.bernoulli(0.5)) {
          x = std::round(x);
          y = std::round(y);
        }
        p.push_back({x, y});
      }
    }
    REQUIRE(rasterize_even_odd(polys, 20, 21) == testing::pnpoly_fill(polys, 20, 21));
  }
}

TEST_CASE("10x10 square covers 100 pixels") {
  const auto m = rasterize_even_odd({testing::rect(4.5, 6.5, 14.5, 16.5)}, 32, 32);
  CHECK(std::count(m.begin(), m.end(), 1) == 100);
  CHECK(m[7 * 32 + 5] == 1);
  CHECK(m[16 * 32 + 14] == 1);
  CHECK(m[17 * 32 + 14] == 0);
}

TEST_CASE("nested contour carves a hole") {
  const auto m = rasterize_even_odd({testing::rect(3.5, 3.5, 27.5, 27.5), testing::rect(10.5, 10.5, 20.5, 20.5)}, 32, 32);
  CHECK(std::count(m.begin(), m.end(), 1) == 24 * 24 - 10 * 10);
  CHECK(m[15 * 32 + 15] == 0);
  CHECK(m[5 * 32 + 5] == 1);
}

TEST_CASE("out-of-bounds and degenerate polygons") {
  const auto outside = rasterize_even_odd({testing::rect(40, 40, 60, 60)}, 32, 32);
  CHECK(std::count(outside.begin(), outside.end(), 1) == 0);
  const auto m = rasterize_even_odd({{{1, 1}, {5, 5}}}, 8, 8);
  CHECK(std::count(m.begin(), m.end(), 1) == 0);
  const auto all = rasterize_even_odd({testing::rect(-5, -5, 50, 50)}, 8, 8);
  CHECK(std::count(all.begin(), all.end(), 1) == 64);
}
