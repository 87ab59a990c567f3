#pragma once

// Brute-force oracles for the windowed attention layers, written against
// original token coordinates rather than the library's shift/partition path.

#include <cmath>
#include <cstdint>
#include <vector>

#include "reference_ops.hpp"

#include "n2/model/layers.hpp"

namespace n2::testing {

inline ref::Vec values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Brute-force shifted-window attention in original coordinates. A token at
// (y, x) sits at rolled position ((y - s) mod H, (x - s) mod W); it attends to
// tokens in the same rolled window whose rows and columns wrapped the same way.
inline ref::Vec oracle_window_step(const ref::Vec& x, std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t c,
                       std::int64_t win, std::int64_t s, const WindowAttentionWeights& wt) {
  const std::int64_t n = h * w;
  const ref::Vec q = ref::linear(x, b * n, c, values_of(wt.q.weight), c, values_of(wt.q.bias));
  const ref::Vec k = ref::linear(x, b * n, c, values_of(wt.k.weight), c, values_of(wt.k.bias));
  const ref::Vec v = ref::linear(x, b * n, c, values_of(wt.v.weight), c, values_of(wt.v.bias));
  const ref::Vec table = values_of(wt.relative_bias_table);
  const std::int64_t heads = wt.heads, d = c / heads, span = 2 * win - 1;
  ref::Vec att(static_cast<std::size_t>(b * n * c), 0.0);
  auto rolled = [&](std::int64_t p, std::int64_t size) { return ((p - s) % size + size) % size; };
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t ry = rolled(i / w, h), rx = rolled(i % w, w);
      const bool wy = i / w < s, wx = i % w < s;  // rolled from the bottom/right edge
      std::vector<std::int64_t> keys;
      for (std::int64_t j = 0; j < n; ++j) {
        const std::int64_t ky = rolled(j / w, h), kx = rolled(j % w, w);
        if (ky / win != ry / win || kx / win != rx / win) continue;
        if (s > 0 && ((j / w < s) != wy || (j % w < s) != wx)) continue;
        keys.push_back(j);
      }
      for (std::int64_t hd = 0; hd < heads; ++hd) {
        ref::Vec logit;
        double mx = -INFINITY;
        for (auto j : keys) {
          const std::int64_t ky = rolled(j / w, h), kx = rolled(j % w, w);
          double dot = 0;
          for (std::int64_t e = 0; e < d; ++e) dot += q[(bi * n + i) * c + hd * d + e] * k[(bi * n + j) * c + hd * d + e];
          const std::int64_t rel = ((ry % win) - (ky % win) + win - 1) * span + (rx % win) - (kx % win) + win - 1;
          logit.push_back(dot / std::sqrt(static_cast<double>(d)) + table[rel * heads + hd]);
          mx = std::max(mx, logit.back());
        }
        double z = 0;
        for (auto& l : logit) z += (l = std::exp(l - mx));
        for (std::size_t kk = 0; kk < keys.size(); ++kk)
          for (std::int64_t e = 0; e < d; ++e)
            att[(bi * n + i) * c + hd * d + e] += logit[kk] / z * v[(bi * n + keys[kk]) * c + hd * d + e];
      }
    }
  return ref::linear(att, b * n, c, values_of(wt.proj.weight), c, values_of(wt.proj.bias));
}

inline ref::Vec oracle_swin_block(const ref::Vec& x, std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t c,
                      const SwinBlockWeights& wt) {
  const std::int64_t n = b * h * w;
  const ref::Vec n1 = ref::layer_norm(x, n, c, values_of(wt.norm1.gamma), values_of(wt.norm1.beta));
  const ref::Vec y = ref::add(x, oracle_window_step(n1, b, h, w, c, wt.window, wt.shift, wt.attn));
  const ref::Vec n2v = ref::layer_norm(y, n, c, values_of(wt.norm2.gamma), values_of(wt.norm2.beta));
  const std::int64_t hid = wt.fc1.weight.dim(1);
  const ref::Vec m = ref::linear(ref::gelu(ref::linear(n2v, n, c, values_of(wt.fc1.weight), hid, values_of(wt.fc1.bias))), n, hid,
                            values_of(wt.fc2.weight), c, values_of(wt.fc2.bias));
  return ref::add(y, m);
}

}  // namespace n2::testing
