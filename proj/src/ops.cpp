#include "n2/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "n2/error.hpp"

namespace n2::ops {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using VecMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

constexpr Real kInvSqrt2 = 0.70710678118654752440;

std::int64_t last_dim(const Tensor& t) {
  if (t.ndim() == 0) throw ShapeError("expected at least one axis");
  return t.shape().back();
}

void accumulate(detail::Node& parent, std::span<const Real> g) {
  if (!parent.requires_grad) return;
  auto& dst = parent.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Tensor scale(const Tensor& a, Real factor) {
  std::vector<Real> out(a.values().begin(), a.values().end());
  for (auto& x : out) x *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor axpy(const Tensor& a, const Tensor& b, Real factor) {
  require_same_shape(a, b, "axpy");
  std::vector<Real> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += factor * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [factor](detail::Node& self) {
    accumulate(*self.parents[0], self.grad);
    auto& p = *self.parents[1];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.ndim() != 2) throw ShapeError("linear: weight must be 2-D");
  const std::int64_t in = weight.dim(0), outc = weight.dim(1);
  if (last_dim(x) != in)
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != outc))
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()));
  const std::int64_t rows = x.numel() / in;

  std::vector<Real> out(static_cast<std::size_t>(rows * outc));
  MatMap y(out.data(), rows, outc);
  ConstMatMap xm(x.values().data(), rows, in);
  ConstMatMap wm(weight.values().data(), in, outc);
  y.noalias() = xm * wm;
  if (bias.defined()) {
    Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> bm(bias.values().data(), outc);
    y.rowwise() += bm;
  }

  Shape shape = x.shape();
  shape.back() = outc;
  std::vector<Tensor> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(shape), std::move(out), std::move(parents),
                     [rows, in, outc](detail::Node& self) {
                       auto& xn = *self.parents[0];
                       auto& wn = *self.parents[1];
                       ConstMatMap dy(self.grad.data(), rows, outc);
                       if (xn.requires_grad) {
                         MatMap dx(xn.ensure_grad().data(), rows, in);
                         ConstMatMap wm(wn.value.data(), in, outc);
                         dx.noalias() += dy * wm.transpose();
                       }
                       if (wn.requires_grad) {
                         MatMap dw(wn.ensure_grad().data(), in, outc);
                         ConstMatMap xm(xn.value.data(), rows, in);
                         dw.noalias() += xm.transpose() * dy;
                       }
                       if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                         Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>> db(
                             self.parents[2]->ensure_grad().data(), outc);
                         db += dy.colwise().sum();
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  const std::int64_t c = last_dim(x);
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("layer_norm: affine parameters do not match channels " + std::to_string(c));
  const std::int64_t rows = x.numel() / c;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<Real> out(xv.size());
  std::vector<Real> xhat(xv.size());
  std::vector<Real> inv_std(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* row = xv.data() + r * c;
    Real mean = 0;
    for (std::int64_t i = 0; i < c; ++i) mean += row[i];
    mean /= static_cast<Real>(c);
    Real var = 0;
    for (std::int64_t i = 0; i < c; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<Real>(c);
    const Real is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (std::int64_t i = 0; i < c; ++i) {
      const auto k = static_cast<std::size_t>(r * c + i);
      xhat[k] = (row[i] - mean) * is;
      out[k] = xhat[k] * gv[static_cast<std::size_t>(i)] + bv[static_cast<std::size_t>(i)];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const auto& dy = self.grad;
        if (gn.requires_grad || bn.requires_grad) {
          auto& dg = gn.ensure_grad();
          auto& db = bn.ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t i = 0; i < c; ++i) {
              const auto k = static_cast<std::size_t>(r * c + i);
              dg[static_cast<std::size_t>(i)] += dy[k] * xhat[k];
              db[static_cast<std::size_t>(i)] += dy[k];
            }
        }
        if (!xn.requires_grad) return;
        auto& dx = xn.ensure_grad();
        std::vector<Real> dxhat(static_cast<std::size_t>(c));
        for (std::int64_t r = 0; r < rows; ++r) {
          Real m1 = 0, m2 = 0;
          for (std::int64_t i = 0; i < c; ++i) {
            const auto k = static_cast<std::size_t>(r * c + i);
            dxhat[static_cast<std::size_t>(i)] = dy[k] * gn.value[static_cast<std::size_t>(i)];
            m1 += dxhat[static_cast<std::size_t>(i)];
            m2 += dxhat[static_cast<std::size_t>(i)] * xhat[k];
          }
          m1 /= static_cast<Real>(c);
          m2 /= static_cast<Real>(c);
          const Real is = inv_std[static_cast<std::size_t>(r)];
          for (std::int64_t i = 0; i < c; ++i) {
            const auto k = static_cast<std::size_t>(r * c + i);
            dx[k] += is * (dxhat[static_cast<std::size_t>(i)] - m1 - xhat[k] * m2);
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  auto xv = x.values();
  std::vector<Real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i)
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  return make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto& xn = *self.parents[0];
    auto& dx = xn.ensure_grad();
    constexpr Real inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const Real v = xn.value[i];
      const Real cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const Real pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  auto xv = x.values();
  std::vector<Real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return make_result(x.shape(), out, {x}, [out](detail::Node& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * out[i] * (1.0 - out[i]);
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<Real> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x},
                     [](detail::Node& self) { accumulate(*self.parents[0], self.grad); });
}

Tensor gather_rows(const Tensor& x, std::int64_t row_size, std::span<const std::int64_t> index,
                   Shape out_shape) {
  if (row_size <= 0 || x.numel() % row_size != 0)
    throw ShapeError("gather_rows: row size does not divide input " + shape_str(x.shape()));
  const std::int64_t in_rows = x.numel() / row_size;
  const auto out_rows = static_cast<std::int64_t>(index.size());
  if (shape_numel(out_shape) != out_rows * row_size)
    throw ShapeError("gather_rows: output shape " + shape_str(out_shape) + " does not hold " +
                     std::to_string(out_rows) + " rows");
  auto xv = x.values();
  std::vector<Real> out(static_cast<std::size_t>(out_rows * row_size), 0.0);
  std::vector<std::int64_t> idx(index.begin(), index.end());
  for (std::int64_t r = 0; r < out_rows; ++r) {
    const auto src = idx[static_cast<std::size_t>(r)];
    if (src < 0) continue;
    if (src >= in_rows) throw ShapeError("gather_rows: index out of range");
    std::copy_n(xv.data() + src * row_size, row_size, out.data() + r * row_size);
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [row_size, idx = std::move(idx)](detail::Node& self) {
                       auto& dx = self.parents[0]->ensure_grad();
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         if (idx[r] < 0) continue;
                         Real* dst = dx.data() + idx[r] * row_size;
                         const Real* src = self.grad.data() + static_cast<std::int64_t>(r) * row_size;
                         for (std::int64_t i = 0; i < row_size; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.ndim() != b.ndim() || a.ndim() == 0)
    throw ShapeError("concat_last: rank mismatch");
  for (int i = 0; i + 1 < a.ndim(); ++i)
    if (a.dim(i) != b.dim(i))
      throw ShapeError("concat_last: leading shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
  const std::int64_t ca = last_dim(a), cb = last_dim(b), rows = a.numel() / ca;
  std::vector<Real> out(static_cast<std::size_t>(rows * (ca + cb)));
  auto av = a.values();
  auto bv = b.values();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  Shape shape = a.shape();
  shape.back() = ca + cb;
  return make_result(std::move(shape), std::move(out), {a, b}, [rows, ca, cb](detail::Node& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    for (std::int64_t r = 0; r < rows; ++r) {
      const Real* g = self.grad.data() + r * (ca + cb);
      if (an.requires_grad) {
        Real* d = an.ensure_grad().data() + r * ca;
        for (std::int64_t i = 0; i < ca; ++i) d[i] += g[i];
      }
      if (bn.requires_grad) {
        Real* d = bn.ensure_grad().data() + r * cb;
        for (std::int64_t i = 0; i < cb; ++i) d[i] += g[ca + i];
      }
    }
  });
}

Tensor mean_tokens(const Tensor& x) {
  if (x.ndim() != 3) throw ShapeError("mean_tokens: expected (B,N,C), got " + shape_str(x.shape()));
  const std::int64_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  auto xv = x.values();
  std::vector<Real> out(static_cast<std::size_t>(b * c), 0.0);
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t t = 0; t < n; ++t)
      for (std::int64_t ci = 0; ci < c; ++ci)
        out[static_cast<std::size_t>(bi * c + ci)] += xv[static_cast<std::size_t>((bi * n + t) * c + ci)];
  for (auto& v : out) v /= static_cast<Real>(n);
  return make_result({b, c}, std::move(out), {x}, [b, n, c](detail::Node& self) {
    auto& dx = self.parents[0]->ensure_grad();
    const Real inv = 1.0 / static_cast<Real>(n);
    for (std::int64_t bi = 0; bi < b; ++bi)
      for (std::int64_t t = 0; t < n; ++t)
        for (std::int64_t ci = 0; ci < c; ++ci)
          dx[static_cast<std::size_t>((bi * n + t) * c + ci)] +=
              inv * self.grad[static_cast<std::size_t>(bi * c + ci)];
  });
}

namespace {

struct Lerp1d {
  std::int64_t i0, i1;
  Real w0, w1;
};

std::vector<Lerp1d> bilinear_axis(std::int64_t in, std::int64_t out) {
  std::vector<Lerp1d> taps(static_cast<std::size_t>(out));
  const Real s = static_cast<Real>(in) / static_cast<Real>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    Real src = s * (static_cast<Real>(o) + 0.5) - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::int64_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = i0 < in - 1 ? i0 + 1 : i0;
    const Real l = src - static_cast<Real>(i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - l, l};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  if (x.ndim() != 4) throw ShapeError("upsample_bilinear: expected (B,C,h,w), got " + shape_str(x.shape()));
  const std::int64_t planes = x.dim(0) * x.dim(1), ih = x.dim(2), iw = x.dim(3);
  auto ty = bilinear_axis(ih, out_h);
  auto tx = bilinear_axis(iw, out_w);
  auto xv = x.values();
  std::vector<Real> out(static_cast<std::size_t>(planes * out_h * out_w));
  for (std::int64_t p = 0; p < planes; ++p) {
    const Real* src = xv.data() + p * ih * iw;
    Real* dst = out.data() + p * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        dst[oy * out_w + ox] = a.w0 * (b.w0 * src[a.i0 * iw + b.i0] + b.w1 * src[a.i0 * iw + b.i1]) +
                               a.w1 * (b.w0 * src[a.i1 * iw + b.i0] + b.w1 * src[a.i1 * iw + b.i1]);
      }
    }
  }
  return make_result({x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x},
                     [planes, ih, iw, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](detail::Node& self) {
                       auto& dx = self.parents[0]->ensure_grad();
                       for (std::int64_t p = 0; p < planes; ++p) {
                         Real* d = dx.data() + p * ih * iw;
                         const Real* g = self.grad.data() + p * out_h * out_w;
                         for (std::int64_t oy = 0; oy < out_h; ++oy) {
                           const auto& a = ty[static_cast<std::size_t>(oy)];
                           for (std::int64_t ox = 0; ox < out_w; ++ox) {
                             const auto& b = tx[static_cast<std::size_t>(ox)];
                             const Real gv = g[oy * out_w + ox];
                             d[a.i0 * iw + b.i0] += gv * a.w0 * b.w0;
                             d[a.i0 * iw + b.i1] += gv * a.w0 * b.w1;
                             d[a.i1 * iw + b.i0] += gv * a.w1 * b.w0;
                             d[a.i1 * iw + b.i1] += gv * a.w1 * b.w1;
                           }
                         }
                       }
                     });
}

namespace {

struct AttnGeometry {
  std::int64_t groups, nq, nk, channels, head_dim;
  int heads;
};

AttnGeometry check_attention(const Tensor& q, const Tensor& k, int heads, const Tensor& bias,
                             const AttentionMaskData* mask) {
  if (q.ndim() != 3 || k.ndim() != 3)
    throw ShapeError("attention: expected (G,N,C) inputs, got " + shape_str(q.shape()) + " / " +
                     shape_str(k.shape()));
  if (q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2))
    throw ShapeError("attention: query " + shape_str(q.shape()) + " vs key " + shape_str(k.shape()));
  const std::int64_t c = q.dim(2);
  if (heads <= 0 || c % heads != 0)
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide " +
                      std::to_string(c) + " channels");
  AttnGeometry g{q.dim(0), q.dim(1), k.dim(1), c, c / heads, heads};
  if (bias.defined() && bias.shape() != Shape{heads, g.nq, g.nk})
    throw ShapeError("attention: bias shape " + shape_str(bias.shape()));
  if (mask) {
    if (mask->nq != g.nq || mask->nk != g.nk || mask->num_windows <= 0 ||
        g.groups % mask->num_windows != 0 ||
        static_cast<std::int64_t>(mask->values.size()) != mask->num_windows * g.nq * g.nk)
      throw ShapeError("attention: mask does not match window layout");
  }
  return g;
}

// Fills `probs` (nq x nk) for one (group, head).
void head_probs(const AttnGeometry& g, const Real* qv, const Real* kv, std::int64_t grp, int h,
                const Tensor& bias, const AttentionMaskData* mask, RowMat& probs) {
  const Real scale = 1.0 / std::sqrt(static_cast<Real>(g.head_dim));
  ConstStridedMap qh(qv + grp * g.nq * g.channels + h * g.head_dim, g.nq, g.head_dim,
                     Eigen::OuterStride<>(g.channels));
  ConstStridedMap kh(kv + grp * g.nk * g.channels + h * g.head_dim, g.nk, g.head_dim,
                     Eigen::OuterStride<>(g.channels));
  probs.noalias() = scale * (qh * kh.transpose());
  if (bias.defined()) probs += ConstMatMap(bias.values().data() + h * g.nq * g.nk, g.nq, g.nk);
  if (mask) {
    const std::int64_t w = grp % mask->num_windows;
    probs += ConstMatMap(mask->values.data() + w * g.nq * g.nk, g.nq, g.nk);
  }
  for (std::int64_t i = 0; i < g.nq; ++i) {
    auto row = probs.row(i);
    const Real m = row.maxCoeff();
    // Scalar exp: Eigen's packet exp clamps large negative inputs to a
    // denormal, so masked keys would keep a nonzero weight.
    row = (row.array() - m).unaryExpr([](Real v) { return std::exp(v); });
    row /= row.sum();
  }
}

}  // namespace

std::vector<Real> attention_probs(const Tensor& q, const Tensor& k, int heads, const Tensor& bias,
                                  const AttentionMaskData* mask) {
  const auto g = check_attention(q, k, heads, bias, mask);
  std::vector<Real> out(static_cast<std::size_t>(g.groups * heads * g.nq * g.nk));
  RowMat probs(g.nq, g.nk);
  for (std::int64_t grp = 0; grp < g.groups; ++grp)
    for (int h = 0; h < heads; ++h) {
      head_probs(g, q.values().data(), k.values().data(), grp, h, bias, mask, probs);
      MatMap(out.data() + (grp * heads + h) * g.nq * g.nk, g.nq, g.nk) = probs;
    }
  return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, const Tensor& bias,
                 const AttentionMaskData* mask) {
  const auto g = check_attention(q, k, heads, bias, mask);
  if (v.shape() != k.shape())
    throw ShapeError("attention: value " + shape_str(v.shape()) + " vs key " + shape_str(k.shape()));

  const bool record = grad_enabled() && (q.requires_grad() || k.requires_grad() ||
                                         v.requires_grad() || (bias.defined() && bias.requires_grad()));
  std::vector<Real> saved;
  if (record) saved.resize(static_cast<std::size_t>(g.groups * heads * g.nq * g.nk));

  std::vector<Real> out(static_cast<std::size_t>(g.groups * g.nq * g.channels));
  RowMat probs(g.nq, g.nk);
  const Real* qv = q.values().data();
  const Real* kv = k.values().data();
  const Real* vv = v.values().data();
  for (std::int64_t grp = 0; grp < g.groups; ++grp)
    for (int h = 0; h < heads; ++h) {
      head_probs(g, qv, kv, grp, h, bias, mask, probs);
      ConstStridedMap vh(vv + grp * g.nk * g.channels + h * g.head_dim, g.nk, g.head_dim,
                         Eigen::OuterStride<>(g.channels));
      StridedMap oh(out.data() + grp * g.nq * g.channels + h * g.head_dim, g.nq, g.head_dim,
                    Eigen::OuterStride<>(g.channels));
      oh.noalias() = probs * vh;
      if (record) MatMap(saved.data() + (grp * heads + h) * g.nq * g.nk, g.nq, g.nk) = probs;
    }

  std::vector<Tensor> parents{q, k, v};
  if (bias.defined()) parents.push_back(bias);
  return make_result(
      q.shape(), std::move(out), std::move(parents), [g, saved = std::move(saved)](detail::Node& self) {
        auto& qn = *self.parents[0];
        auto& kn = *self.parents[1];
        auto& vn = *self.parents[2];
        detail::Node* bn = self.parents.size() > 3 ? self.parents[3].get() : nullptr;
        const Real scale = 1.0 / std::sqrt(static_cast<Real>(g.head_dim));
        Real* dq = qn.requires_grad ? qn.ensure_grad().data() : nullptr;
        Real* dk = kn.requires_grad ? kn.ensure_grad().data() : nullptr;
        Real* dv = vn.requires_grad ? vn.ensure_grad().data() : nullptr;
        Real* dbias = bn && bn->requires_grad ? bn->ensure_grad().data() : nullptr;
        RowMat dp(g.nq, g.nk);
        for (std::int64_t grp = 0; grp < g.groups; ++grp)
          for (int h = 0; h < g.heads; ++h) {
            ConstMatMap p(saved.data() + (grp * g.heads + h) * g.nq * g.nk, g.nq, g.nk);
            const std::int64_t qoff = grp * g.nq * g.channels + h * g.head_dim;
            const std::int64_t koff = grp * g.nk * g.channels + h * g.head_dim;
            const Eigen::OuterStride<> st(g.channels);
            ConstStridedMap dout(self.grad.data() + qoff, g.nq, g.head_dim, st);
            ConstStridedMap vh(vn.value.data() + koff, g.nk, g.head_dim, st);
            if (dv) StridedMap(dv + koff, g.nk, g.head_dim, st).noalias() += p.transpose() * dout;
            dp.noalias() = dout * vh.transpose();
            // softmax backward: dS = P .* (dP - rowsum(dP .* P))
            Eigen::Matrix<Real, Eigen::Dynamic, 1> rs = (dp.array() * p.array()).rowwise().sum();
            dp = p.array() * (dp.array().colwise() - rs.array());
            if (dbias) MatMap(dbias + h * g.nq * g.nk, g.nq, g.nk) += dp;
            if (dq) {
              ConstStridedMap kh(kn.value.data() + koff, g.nk, g.head_dim, st);
              StridedMap(dq + qoff, g.nq, g.head_dim, st).noalias() += scale * (dp * kh);
            }
            if (dk) {
              ConstStridedMap qh(qn.value.data() + qoff, g.nq, g.head_dim, st);
              StridedMap(dk + koff, g.nk, g.head_dim, st).noalias() += scale * (dp.transpose() * qh);
            }
          }
      });
}

}  // namespace n2::ops
