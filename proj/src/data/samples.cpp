#include "n2/data/samples.hpp"

#include <algorithm>
#include <cmath>

#include "n2/error.hpp"

namespace n2 {

void SliceSample::refresh_presence() {
  presence.assign(static_cast<std::size_t>(classes), 0);
  for (std::int64_t c = 0; c < classes; ++c) {
    const auto begin = gt_mask.begin() + static_cast<std::ptrdiff_t>(c * plane());
    presence[static_cast<std::size_t>(c)] =
        std::any_of(begin, begin + static_cast<std::ptrdiff_t>(plane()), [](Real v) { return v > 0; }) ? 1 : 0;
  }
}

std::vector<SliceSample> build_slice_samples(const VolumeRecord& v, ContextSource source) {
  v.validate();
  const std::int64_t c_count = v.num_classes(), plane = v.slice_size();
  std::vector<SliceSample> out;
  out.reserve(static_cast<std::size_t>(v.depth));
  for (std::int64_t z = 0; z < v.depth; ++z) {
    SliceSample s;
    s.subject_id = v.subject_id;
    s.slice_index = z;
    s.classes = c_count;
    s.height = v.height;
    s.width = v.width;
    const auto img = v.image.begin() + static_cast<std::ptrdiff_t>(z * plane);
    s.image.assign(img, img + static_cast<std::ptrdiff_t>(plane));
    s.gt_mask.resize(static_cast<std::size_t>(c_count * plane));
    s.prev_mask.assign(static_cast<std::size_t>(c_count * plane), 0.0);
    for (std::int64_t c = 0; c < c_count; ++c)
      for (std::int64_t i = 0; i < plane; ++i) {
        const auto k = static_cast<std::size_t>(c * plane + i);
        s.gt_mask[k] = v.masks[static_cast<std::size_t>((c * v.depth + z) * plane + i)];
        if (source == ContextSource::ground_truth && z > 0)
          s.prev_mask[k] = v.masks[static_cast<std::size_t>((c * v.depth + z - 1) * plane + i)];
      }
    s.refresh_presence();
    out.push_back(std::move(s));
  }
  return out;
}

void to_json(nlohmann::json& j, const NormStats& s) { j = {{"mean", s.mean}, {"stddev", s.stddev}}; }

void from_json(const nlohmann::json& j, NormStats& s) {
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("stddev").get<double>();
}

void minmax_scale(std::span<Real> slice, const std::string& where) {
  if (slice.empty()) return;
  Real lo = slice[0], hi = slice[0];
  for (Real v : slice) {
    if (!std::isfinite(v)) throw DataError("non-finite intensity in " + where);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const Real range = hi - lo;
  for (Real& v : slice) v = range > 0 ? (v - lo) / range : 0.0;
}

namespace {

std::string where(const SliceSample& s) {
  return "subject '" + s.subject_id + "' slice " + std::to_string(s.slice_index);
}

}  // namespace

NormStats fit_normalization(const std::vector<SliceSample>& samples) {
  if (samples.empty()) throw DataError("cannot fit normalization on an empty training split");
  double sum = 0, count = 0;
  std::vector<Real> buf;
  for (const auto& s : samples) {
    buf = s.image;
    minmax_scale(buf, where(s));
    for (Real v : buf) sum += v;
    count += static_cast<double>(buf.size());
  }
  const double mean = sum / count;
  double ss = 0;
  for (const auto& s : samples) {
    buf = s.image;
    minmax_scale(buf, where(s));
    for (Real v : buf) ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / count);
  return {mean, sd > 0 ? sd : 1.0};
}

void normalize_image(std::span<Real> slice, const NormStats& stats, const std::string& where) {
  minmax_scale(slice, where);
  for (Real& v : slice) v = (v - stats.mean) / stats.stddev;
}

void normalize_samples(std::vector<SliceSample>& samples, const NormStats& stats) {
  for (auto& s : samples) normalize_image(s.image, stats, where(s));
}

Batch stack_batch(std::span<const SliceSample* const> samples) {
  if (samples.empty()) throw DataError("stack_batch: empty batch");
  const auto& f = *samples[0];
  const auto b = static_cast<std::int64_t>(samples.size());
  std::vector<Real> img, prev, gt, pres;
  img.reserve(static_cast<std::size_t>(b * f.plane()));
  prev.reserve(static_cast<std::size_t>(b * f.classes * f.plane()));
  gt.reserve(prev.capacity());
  for (const auto* s : samples) {
    if (s->height != f.height || s->width != f.width || s->classes != f.classes)
      throw ShapeError("stack_batch: samples disagree on geometry");
    img.insert(img.end(), s->image.begin(), s->image.end());
    prev.insert(prev.end(), s->prev_mask.begin(), s->prev_mask.end());
    gt.insert(gt.end(), s->gt_mask.begin(), s->gt_mask.end());
    for (auto p : s->presence) pres.push_back(p);
  }
  return {Tensor({b, 1, f.height, f.width}, std::move(img)),
          Tensor({b, f.classes, f.height, f.width}, std::move(prev)),
          Tensor({b, f.classes, f.height, f.width}, std::move(gt)), Tensor({b, f.classes}, std::move(pres))};
}

}  // namespace n2
