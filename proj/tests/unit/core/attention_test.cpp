#include <cmath>

#include "doctest.h"
#include "reference_ops.hpp"
#include "test_support.hpp"

#include "n2/error.hpp"
#include "n2/ops.hpp"

using namespace n2;
using n2::testing::random_tensor;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("linear matches a hand matrix product") {
  Rng rng(1);
  const auto x = random_tensor({2, 3, 5}, rng);
  const auto w = random_tensor({5, 4}, rng);
  const auto b = random_tensor({4}, rng);
  const auto y = ops::linear(x, w, b);
  CHECK(y.shape() == Shape{2, 3, 4});
  const auto expect = ref::linear(vec(x), 6, 5, vec(w), 4, vec(b));
  CHECK(testing::max_abs_diff(y.values(), expect) < 1e-12);
  CHECK_THROWS_AS(ops::linear(x, random_tensor({4, 4}, rng), {}), ShapeError);
}

TEST_CASE("layer_norm and gelu match their closed forms") {
  Rng rng(2);
  const auto x = random_tensor({7, 6}, rng, 3.0);
  const auto g = random_tensor({6}, rng);
  const auto b = random_tensor({6}, rng);
  CHECK(testing::max_abs_diff(ops::layer_norm(x, g, b).values(), ref::layer_norm(vec(x), 7, 6, vec(g), vec(b))) < 1e-12);
  CHECK(testing::max_abs_diff(ops::gelu(x).values(), ref::gelu(vec(x))) < 1e-15);
  CHECK(ops::gelu(Tensor({1}, {0.0})).item() == 0.0);
}

TEST_CASE("attention matches brute-force softmax with bias and mask") {
  Rng rng(3);
  const std::int64_t g = 4, nq = 5, nk = 6, c = 8;
  const int heads = 2;
  const auto q = random_tensor({g, nq, c}, rng);
  const auto k = random_tensor({g, nk, c}, rng);
  const auto v = random_tensor({g, nk, c}, rng);
  const auto bias = random_tensor({heads, nq, nk}, rng, 0.5);
  ops::AttentionMaskData mask{2, nq, nk, {}};
  for (std::int64_t i = 0; i < 2 * nq * nk; ++i) mask.values.push_back(rng.bernoulli(0.3) ? -1e4 : 0.0);
  // every query keeps at least one key
  for (std::int64_t w = 0; w < 2; ++w)
    for (std::int64_t i = 0; i < nq; ++i) mask.values[static_cast<std::size_t>((w * nq + i) * nk + i)] = 0.0;

  SUBCASE("plain") {
    const auto out = ops::attention(q, k, v, heads);
    const auto expect = ref::attention(vec(q), vec(k), vec(v), g, nq, nk, c, heads);
    CHECK(testing::max_abs_diff(out.values(), expect) < 1e-12);
  }
  SUBCASE("bias and mask") {
    const auto out = ops::attention(q, k, v, heads, bias, &mask);
    const auto expect =
        ref::attention(vec(q), vec(k), vec(v), g, nq, nk, c, heads, vec(bias), mask.values, mask.num_windows);
    CHECK(testing::max_abs_diff(out.values(), expect) < 1e-12);
  }
  SUBCASE("probabilities are normalized and masked keys vanish") {
    const auto p = ops::attention_probs(q, k, heads, bias, &mask);
    REQUIRE(p.size() == static_cast<std::size_t>(g * heads * nq * nk));
    for (std::int64_t gi = 0; gi < g; ++gi)
      for (std::int64_t h = 0; h < heads; ++h)
        for (std::int64_t i = 0; i < nq; ++i) {
          double s = 0;
          for (std::int64_t j = 0; j < nk; ++j) {
            const double pij = p[static_cast<std::size_t>(((gi * heads + h) * nq + i) * nk + j)];
            s += pij;
            if (mask.values[static_cast<std::size_t>(((gi % 2) * nq + i) * nk + j)] != 0.0) CHECK(pij == 0.0);
          }
          CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
  }
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng(4);
  const auto q = random_tensor({3, 4, 6}, rng, 1.0, true);
  const auto k = random_tensor({3, 5, 6}, rng, 1.0, true);
  const auto v = random_tensor({3, 5, 6}, rng, 1.0, true);
  const auto bias = random_tensor({3, 4, 5}, rng, 0.3, true);
  const auto w = random_tensor({3, 4, 6}, rng);
  const auto r = testing::check_gradients(
      {q, k, v, bias}, [&] { return testing::weighted_sum(ops::attention(q, k, v, 3, bias), w); }, rng, 6);
  CHECK(r.checked == 24);
  CHECK(r.worst < 1e-6);
}

TEST_CASE("elementwise and reshaping ops have correct gradients") {
  Rng rng(5);
  const auto x = random_tensor({2, 3, 4}, rng, 1.0, true);
  const auto g = random_tensor({4}, rng, 1.0, true);
  const auto b = random_tensor({4}, rng, 1.0, true);
  const auto wt = random_tensor({4, 5}, rng, 1.0, true);
  const auto bl = random_tensor({5}, rng, 1.0, true);
  const auto wsum = random_tensor({2, 3, 5}, rng);
  const auto r1 = testing::check_gradients({x, g, b, wt, bl}, [&] {
    return testing::weighted_sum(ops::linear(ops::gelu(ops::layer_norm(x, g, b)), wt, bl), wsum);
  }, rng, 5);
  CHECK(r1.worst < 1e-6);

  const auto img = random_tensor({1, 2, 3, 3}, rng, 1.0, true);
  const auto wu = random_tensor({1, 2, 12, 12}, rng);
  const auto r2 = testing::check_gradients(
      {img}, [&] { return testing::weighted_sum(ops::upsample_bilinear(img, 12, 12), wu); }, rng, 10);
  CHECK(r2.worst < 1e-7);

  const std::vector<std::int64_t> idx{2, -1, 0, 2};
  const auto rows = random_tensor({3, 4}, rng, 1.0, true);
  const auto wg = random_tensor({4, 4}, rng);
  const auto r3 = testing::check_gradients(
      {rows}, [&] { return testing::weighted_sum(ops::gather_rows(rows, 4, idx, {4, 4}), wg); }, rng, 8);
  CHECK(r3.worst < 1e-7);
}

TEST_CASE("upsample_bilinear equals a separable tent kernel") {
  Rng rng(6);
  const auto x = random_tensor({1, 1, 4, 5}, rng);
  const auto y = ops::upsample_bilinear(x, 16, 20);
  for (std::int64_t oy = 0; oy < 16; ++oy)
    for (std::int64_t ox = 0; ox < 20; ++ox) {
      double s = 0;
      for (std::int64_t iy = 0; iy < 4; ++iy)
        for (std::int64_t ix = 0; ix < 5; ++ix)
          s += ref::tent_weight(4, 16, oy, iy) * ref::tent_weight(5, 20, ox, ix) * x.values()[iy * 5 + ix];
      CHECK(y.values()[oy * 20 + ox] == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("no-grad guard suppresses graph recording") {
  const auto x = Tensor::full({3}, 2.0, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    CHECK_FALSE(ops::scale(x, 2.0).requires_grad());
  }
  CHECK(grad_enabled());
  CHECK(ops::scale(x, 2.0).requires_grad());
}
