#include "n2/losses.hpp"

#include <algorithm>
#include <cmath>

#include "n2/error.hpp"
#include "n2/ops.hpp"

namespace n2 {

void TverskyParams::validate() const {
  if (alpha < 0 || beta < 0) throw ConfigError("tversky: alpha and beta must be >= 0");
  if (!(alpha + beta > 0)) throw ConfigError("tversky: alpha + beta must be > 0");
  if (!(smooth > 0)) throw ConfigError("tversky: smooth must be > 0");
}

void to_json(nlohmann::json& j, const TverskyParams& p) {
  j = nlohmann::json{{"alpha", p.alpha}, {"beta", p.beta}, {"smooth", p.smooth}};
}

void from_json(const nlohmann::json& j, TverskyParams& p) {
  for (const auto& [key, _] : j.items())
    if (key != "alpha" && key != "beta" && key != "smooth") throw ConfigError("unknown tversky key '" + key + "'");
  if (j.contains("alpha")) p.alpha = j.at("alpha").get<double>();
  if (j.contains("beta")) p.beta = j.at("beta").get<double>();
  if (j.contains("smooth")) p.smooth = j.at("smooth").get<double>();
}

namespace {

void check_pair(const Tensor& pred, const Tensor& gt, const char* op) {
  if (pred.ndim() != 4) throw ShapeError(std::string(op) + ": expected (B, C, H, W), got " + shape_str(pred.shape()));
  if (pred.shape() != gt.shape())
    throw ShapeError(std::string(op) + ": prediction " + shape_str(pred.shape()) + " vs ground truth " +
                     shape_str(gt.shape()));
  for (Real p : pred.values())
    if (!(p >= 0.0 && p <= 1.0)) throw DataError(std::string(op) + ": prediction outside [0,1]");
  for (Real g : gt.values())
    if (g != 0.0 && g != 1.0) throw DataError(std::string(op) + ": ground truth must be binary");
}

}  // namespace

std::vector<ConfusionCounts> confusion_counts(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt, "confusion_counts");
  const std::int64_t planes = pred.dim(0) * pred.dim(1), n = pred.dim(2) * pred.dim(3);
  const auto pv = pred.values();
  const auto gv = gt.values();
  std::vector<ConfusionCounts> out(static_cast<std::size_t>(planes));
  for (std::int64_t p = 0; p < planes; ++p) {
    auto& c = out[static_cast<std::size_t>(p)];
    for (std::int64_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(p * n + i);
      c.tp += pv[k] * gv[k];
      c.fp += pv[k] * (1.0 - gv[k]);
      c.fn += (1.0 - pv[k]) * gv[k];
    }
  }
  return out;
}

Tensor tversky_loss(const Tensor& pred, const Tensor& gt, const TverskyParams& params) {
  params.validate();
  const auto counts = confusion_counts(pred, gt);
  const Real a = params.alpha, b = params.beta, s = params.smooth;
  const auto planes = static_cast<Real>(counts.size());
  Real loss = 0;
  for (const auto& c : counts) loss += 1.0 - (c.tp + s) / (c.tp + a * c.fp + b * c.fn + s);
  loss /= planes;

  const std::int64_t n = pred.dim(2) * pred.dim(3);
  const Tensor gt_copy = gt.detach();
  return make_result({}, {loss}, {pred}, [counts, a, b, s, n, planes, gt_copy](detail::Node& self) {
    auto& dp = self.parents[0]->ensure_grad();
    const auto gv = gt_copy.values();
    const Real seed = self.grad[0] / planes;
    for (std::size_t p = 0; p < counts.size(); ++p) {
      const auto& c = counts[p];
      const Real num = c.tp + s;
      const Real den = c.tp + a * c.fp + b * c.fn + s;
      for (std::int64_t i = 0; i < n; ++i) {
        const auto k = p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i);
        const Real g = gv[k];
        const Real dnum = g;
        const Real dden = g + a * (1.0 - g) - b * g;
        dp[k] -= seed * (dnum * den - num * dden) / (den * den);
      }
    }
  });
}

std::vector<Real> dice_loss(const Tensor& pred, const Tensor& gt, double smooth) {
  const auto counts = confusion_counts(pred, gt);
  std::vector<Real> out;
  out.reserve(counts.size());
  for (const auto& c : counts) {
    const Real den = 2 * c.tp + c.fp + c.fn + smooth;
    out.push_back(den == 0.0 ? 0.0 : 1.0 - (2 * c.tp + smooth) / den);
  }
  return out;
}

Tensor detection_loss(const Tensor& logits, const Tensor& presence) {
  if (logits.shape() != presence.shape())
    throw ShapeError("detection_loss: logits " + shape_str(logits.shape()) + " vs labels " +
                     shape_str(presence.shape()));
  const auto xv = logits.values();
  const auto yv = presence.values();
  const auto n = static_cast<Real>(xv.size());
  Real loss = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const Real x = xv[i];
    loss += std::max(x, 0.0) - x * yv[i] + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= n;
  const Tensor labels = presence.detach();
  return make_result({}, {loss}, {logits}, [labels, n](detail::Node& self) {
    auto& parent = *self.parents[0];
    auto& dx = parent.ensure_grad();
    const auto yv = labels.values();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const Real sig = 1.0 / (1.0 + std::exp(-parent.value[i]));
      dx[i] += self.grad[0] * (sig - yv[i]) / n;
    }
  });
}

Tensor combined_loss(const Tensor& seg, const Tensor& det, double lambda_det) {
  if (seg.numel() != 1 || !std::isfinite(seg.item()))
    throw TrainingError("combined_loss: segmentation term is not a finite scalar");
  if (!det.defined()) return seg;
  if (det.numel() != 1 || !std::isfinite(det.item()))
    throw TrainingError("combined_loss: detection term is not a finite scalar");
  return ops::axpy(seg, det, lambda_det);
}

std::vector<bool> presence_from_mask(const Tensor& mask) {
  if (mask.ndim() != 3) throw ShapeError("presence_from_mask: expected (C, H, W), got " + shape_str(mask.shape()));
  const std::int64_t c = mask.dim(0), n = mask.dim(1) * mask.dim(2);
  const auto v = mask.values();
  std::vector<bool> out(static_cast<std::size_t>(c), false);
  for (std::int64_t ci = 0; ci < c; ++ci)
    for (std::int64_t i = 0; i < n; ++i)
      if (v[static_cast<std::size_t>(ci * n + i)] > 0) {
        out[static_cast<std::size_t>(ci)] = true;
        break;
      }
  return out;
}

}  // namespace n2
