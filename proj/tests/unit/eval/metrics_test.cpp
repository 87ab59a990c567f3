#include "doctest.h"
#include "test_support.hpp"

#include "n2/data/phantom.hpp"
#include "n2/eval/metrics.hpp"

using namespace n2;

namespace {

/// Pairwise concordance: P(score_pos > score_neg) + 0.5 P(tie).
double brute_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / den;
}

SliceMetricsRecord rec(std::int64_t c, bool present, bool predicted) {
  SliceMetricsRecord r;
  r.class_id = c;
  r.presence_gt = present;
  r.predicted_any = predicted;
  r.hallucinated = predicted && !present;
  return r;
}

/// One class present on slices [4, 16) of 20: absent from 40% of slices.
VolumeRecord forty_percent_absent() {
  PhantomSpec s;
  s.depth = 20;
  s.height = s.width = 24;
  PhantomClass c;
  c.name = "target";
  c.center_y = c.center_x = {12, 12};
  c.radius_y = c.radius_x = {5, 5};
  c.z_start = {4, 4};
  c.z_length = {12, 12};
  s.classes = {c};
  return generate_phantom(s, "p40");
}

VolumeInference prediction_from(const VolumeRecord& v, const std::vector<std::uint8_t>& masks) {
  VolumeInference p;
  p.depth = v.depth;
  p.classes = v.num_classes();
  p.rois = p.classes;
  p.height = v.height;
  p.width = v.width;
  p.masks = masks;
  p.probs.assign(masks.begin(), masks.end());
  p.det_probs.assign(static_cast<std::size_t>(p.depth * p.rois), 0.5);
  p.gate_probs = p.det_probs;
  return p;
}

}  // namespace

TEST_CASE("AUC worked example and brute-force agreement") {
  CHECK(*detection_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<std::uint8_t>{0, 0, 1, 1}) == 0.75);
  CHECK(*detection_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<std::uint8_t>{0, 0, 1, 1}) == 1.0);
  CHECK(*detection_auc(std::vector<double>(6, 0.3), std::vector<std::uint8_t>{0, 1, 0, 1, 1, 0}) == 0.5);
  CHECK_FALSE(detection_auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}).has_value());
  CHECK_FALSE(detection_auc(std::vector<double>{}, std::vector<std::uint8_t>{}).has_value());

  Rng rng(8);
  for (int t = 0; t < 300; ++t) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 40));
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_int(0, 6)) / 6.0;  // coarse grid forces ties
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    REQUIRE(std::abs(*detection_auc(s, y) - brute_auc(s, y)) < 1e-12);
  }
}

TEST_CASE("hallucination rate counts over absent slices") {
  std::vector<SliceMetricsRecord> r;
  for (int i = 0; i < 12; ++i) r.push_back(rec(0, false, i < 3));
  for (int i = 0; i < 5; ++i) r.push_back(rec(0, true, true));
  for (int i = 0; i < 4; ++i) r.push_back(rec(1, true, true));
  for (int i = 0; i < 4; ++i) r.push_back(rec(2, false, false));
  const auto rates = hallucination_rate(r, 3);
  CHECK(*rates[0] == 0.25);
  CHECK_FALSE(rates[1].has_value());
  CHECK(*rates[2] == 0.0);
}

TEST_CASE("hard Dice loss") {
  const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{1, 0, 1, 0}, z(4, 0);
  CHECK(hard_dice_loss(a, b) == 0.5);
  CHECK(hard_dice_loss(a, a) == 0.0);
  CHECK(hard_dice_loss(z, z) == 0.0);
  CHECK(hard_dice_loss(z, a) == 1.0);
}

TEST_CASE("perfect predictions give zero loss and no hallucinations") {
  const auto v = generate_phantom(PhantomSpec::pelvis(16, 24, 24, 3), "s");
  const auto recs = slice_records(v, prediction_from(v, v.masks));
  CHECK(recs.size() == static_cast<std::size_t>(v.depth * 3));
  const auto s = summarize(recs, 3);
  CHECK(s.dice_loss.mean == 0.0);
  CHECK(*s.hallucination_rate == 0.0);
}

TEST_CASE("all-zero predictor on a 40%-absent class averages exactly 0.6") {
  const auto v = forty_percent_absent();
  const auto recs = slice_records(v, prediction_from(v, std::vector<std::uint8_t>(v.masks.size(), 0)));
  for (const auto& r : recs) CHECK(r.dice_loss == (r.presence_gt ? 1.0 : 0.0));
  const auto s = summarize(recs, 1);
  CHECK(s.classes[0].absent_slices == 8);
  CHECK(s.dice_loss.mean == 0.6);
  CHECK(s.dice_loss_absent.mean == 0.0);
  CHECK(*s.hallucination_rate == 0.0);
}

TEST_CASE("mean and population deviation") {
  const auto m = mean_std(std::vector<double>{1, 2, 3, 4});
  CHECK(m.mean == 2.5);
  CHECK(m.stddev == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK(mean_std(std::vector<double>{}).count == 0);
}
