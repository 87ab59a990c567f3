#include <cmath>

#include "doctest.h"
#include "test_support.hpp"

#include "n2/data/phantom.hpp"
#include "n2/data/samples.hpp"
#include "n2/error.hpp"

using namespace n2;

namespace {

VolumeRecord volume() { return generate_phantom(PhantomSpec::pelvis(12, 16, 16, 1), "s"); }

std::vector<Real> mask_slice(const VolumeRecord& v, std::int64_t z) {
  std::vector<Real> out;
  for (std::int64_t c = 0; c < v.num_classes(); ++c)
    for (std::int64_t y = 0; y < v.height; ++y)
      for (std::int64_t x = 0; x < v.width; ++x) out.push_back(v.mask(c, z, y, x));
  return out;
}

}  // namespace

TEST_CASE("one sample per slice with previous ground truth as context") {
  const auto v = volume();
  const auto s = build_slice_samples(v, ContextSource::ground_truth);
  REQUIRE(s.size() == 12);
  for (std::int64_t z = 0; z < 12; ++z) {
    const auto& x = s[static_cast<std::size_t>(z)];
    CHECK(x.slice_index == z);
    CHECK(x.gt_mask == mask_slice(v, z));
    if (z == 0) CHECK(std::all_of(x.prev_mask.begin(), x.prev_mask.end(), [](Real m) { return m == 0; }));
    else CHECK(x.prev_mask == mask_slice(v, z - 1));
    for (std::int64_t c = 0; c < 3; ++c) CHECK(x.presence[static_cast<std::size_t>(c)] == v.present(c, z));
    CHECK(std::equal(x.image.begin(), x.image.end(), v.image.begin() + z * 256));
  }
}

TEST_CASE("zeros context mode") {
  for (const auto& x : build_slice_samples(volume(), ContextSource::zeros))
    CHECK(std::all_of(x.prev_mask.begin(), x.prev_mask.end(), [](Real m) { return m == 0; }));
}

TEST_CASE("min-max scaling") {
  std::vector<Real> ramp(101);
  for (int i = 0; i <= 100; ++i) ramp[static_cast<std::size_t>(i)] = i;
  minmax_scale(ramp, "ramp");
  CHECK(ramp[50] == 0.5);
  CHECK(ramp[0] == 0.0);
  CHECK(ramp[100] == 1.0);

  std::vector<Real> flat(9, 7.0);
  minmax_scale(flat, "flat");
  CHECK(std::all_of(flat.begin(), flat.end(), [](Real x) { return x == 0; }));

  std::vector<Real> bad{1, NAN, 2};
  CHECK_THROWS_WITH_AS(minmax_scale(bad, "subject s slice 4"), doctest::Contains("slice 4"), DataError);
}

TEST_CASE("fitted normalization standardizes the training set") {
  auto s = build_slice_samples(volume(), ContextSource::ground_truth);
  const auto stats = fit_normalization(s);
  normalize_samples(s, stats);
  double sum = 0, sq = 0, n = 0;
  for (const auto& x : s)
    for (Real v : x.image) sum += v, sq += v * v, ++n;
  CHECK(std::abs(sum / n) < 1e-6);
  CHECK(std::abs(std::sqrt(sq / n - (sum / n) * (sum / n)) - 1.0) < 1e-6);
}

TEST_CASE("normalization stats JSON round trip") {
  const NormStats s{0.125, 3.5};
  const auto b = nlohmann::json(s).get<NormStats>();
  CHECK(b.mean == s.mean);
  CHECK(b.stddev == s.stddev);
}

TEST_CASE("batches stack samples in order") {
  const auto s = build_slice_samples(volume(), ContextSource::ground_truth);
  const SliceSample* picks[] = {&s[5], &s[2]};
  const auto b = stack_batch(picks);
  CHECK(b.image.shape() == std::vector<std::int64_t>{2, 1, 16, 16});
  CHECK(b.prev_mask.shape() == std::vector<std::int64_t>{2, 3, 16, 16});
  CHECK(b.presence.shape() == std::vector<std::int64_t>{2, 3});
  CHECK(std::equal(s[2].gt_mask.begin(), s[2].gt_mask.end(), b.gt_mask.values().begin() + 3 * 256));
  CHECK(b.presence.values()[3] == s[2].presence[0]);
}
