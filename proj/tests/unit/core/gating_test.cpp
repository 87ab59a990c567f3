#include "doctest.h"
#include "gating_properties.hpp"

#include "n2/error.hpp"
#include "n2/model/gating.hpp"

using namespace n2;

TEST_CASE("gating properties hold over random cases") {
  for (auto mode : {GatingMode::none, GatingMode::soft, GatingMode::hard}) {
    CAPTURE(to_string(mode));
    const auto r = testing::check_gating_property(mode, 1000, 99 + static_cast<int>(mode));
    CHECK(r.cases == 1000);
    CHECK_MESSAGE(r.failures == 0, r.first_failure);
  }
}

TEST_CASE("hard gate at the threshold keeps the plane") {
  const Tensor logits({1, 2, 1, 2}, {0.0, 1.0, -1.0, 2.0});
  const auto g = gate(logits, Tensor({1, 2}, {0.5, 0.4999}), GatingMode::hard, 0.5);
  CHECK(g.seg_probs.values()[0] == 0.5);
  CHECK(g.seg_probs.values()[2] == 0.0);
  CHECK(g.seg_probs.values()[3] == 0.0);
}

TEST_CASE("single segmentation class is gated by the strongest detection") {
  const Tensor logits({1, 1, 1, 1}, {3.0});
  const Tensor det({1, 3}, {0.1, 0.7, 0.2});
  CHECK(gate_confidence(det, 0, 0, 1) == 0.7);
  CHECK(gate(logits, det, GatingMode::soft, 0.5).seg_probs.item() == logistic(3.0) * 0.7);
  CHECK_THROWS_AS(gate(Tensor::zeros({1, 2, 1, 1}), det, GatingMode::none, 0.5), ConfigError);
}

TEST_CASE("gate rejects invalid inputs") {
  const auto logits = Tensor::zeros({2, 3, 2, 2});
  CHECK_THROWS_AS(gate(logits, Tensor::full({2, 3}, 1.5), GatingMode::hard, 0.5), DataError);
  CHECK_THROWS_AS(gate(logits, Tensor::full({1, 3}, 0.5), GatingMode::hard, 0.5), ShapeError);
  CHECK_THROWS_AS(gate(logits, Tensor::full({2, 3}, 0.5), GatingMode::hard, 1.5), ConfigError);
  CHECK_THROWS_AS(gate(Tensor::zeros({2, 3}), Tensor::full({2, 3}, 0.5), GatingMode::hard, 0.5), ShapeError);
}

TEST_CASE("gating mode names round-trip") {
  for (auto mode : {GatingMode::none, GatingMode::soft, GatingMode::hard})
    CHECK(parse_gating_mode(to_string(mode)) == mode);
  CHECK_THROWS_AS(parse_gating_mode("sometimes"), ConfigError);
}
