#include "n2/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "n2/error.hpp"

namespace n2 {

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.count = values.size();
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0;
  for (double v : values) sq += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(sq / n);
  return r;
}

double hard_dice_loss(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) throw ShapeError("hard_dice_loss: plane sizes differ");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tp += pred[i] && gt[i];
    fp += pred[i] && !gt[i];
    fn += !pred[i] && gt[i];
  }
  const auto den = 2 * tp + fp + fn;
  return den == 0 ? 0.0 : 1.0 - static_cast<double>(2 * tp) / static_cast<double>(den);
}

std::optional<double> detection_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("detection_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) pos_rank_sum += avg_rank, ++pos;
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  return (pos_rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

std::vector<std::optional<double>> hallucination_rate(const std::vector<SliceMetricsRecord>& records,
                                                      std::int64_t classes) {
  std::vector<std::size_t> absent(static_cast<std::size_t>(classes), 0), halluc(absent);
  for (const auto& r : records) {
    if (r.class_id < 0 || r.class_id >= classes) throw DataError("record class id out of range");
    if (!r.presence_gt) {
      ++absent[static_cast<std::size_t>(r.class_id)];
      halluc[static_cast<std::size_t>(r.class_id)] += r.hallucinated;
    }
  }
  std::vector<std::optional<double>> out(static_cast<std::size_t>(classes));
  for (std::size_t c = 0; c < out.size(); ++c)
    if (absent[c] > 0) out[c] = static_cast<double>(halluc[c]) / static_cast<double>(absent[c]);
  return out;
}

std::vector<SliceMetricsRecord> slice_records(const VolumeRecord& gt, const VolumeInference& pred) {
  if (gt.depth != pred.depth || gt.height != pred.height || gt.width != pred.width ||
      gt.num_classes() != pred.classes)
    throw ShapeError("slice_records: prediction geometry differs from subject " + gt.subject_id);
  const auto plane = static_cast<std::size_t>(gt.slice_size());
  std::vector<SliceMetricsRecord> out;
  for (std::int64_t z = 0; z < gt.depth; ++z)
    for (std::int64_t c = 0; c < pred.classes; ++c) {
      const auto off = static_cast<std::size_t>(c * gt.depth + z) * plane;
      const std::span<const std::uint8_t> p(pred.masks.data() + off, plane), g(gt.masks.data() + off, plane);
      SliceMetricsRecord r;
      r.subject_id = gt.subject_id;
      r.slice_index = z;
      r.class_id = c;
      r.dice_loss = hard_dice_loss(p, g);
      r.presence_gt = std::any_of(g.begin(), g.end(), [](auto v) { return v != 0; });
      r.det_prob = pred.gate_probs[static_cast<std::size_t>(z * pred.classes + c)];
      r.predicted_any = std::any_of(p.begin(), p.end(), [](auto v) { return v != 0; });
      r.hallucinated = r.predicted_any && !r.presence_gt;
      out.push_back(r);
    }
  return out;
}

ReportSummary summarize(const std::vector<SliceMetricsRecord>& records, std::int64_t classes) {
  ReportSummary s;
  s.records = records.size();
  s.classes.resize(static_cast<std::size_t>(classes));
  const auto rates = hallucination_rate(records, classes);
  std::vector<double> all, all_absent;
  std::size_t absent = 0, halluc = 0;
  std::vector<double> aucs;
  for (std::int64_t c = 0; c < classes; ++c) {
    std::vector<double> d, da, dp, scores;
    std::vector<std::uint8_t> labels;
    for (const auto& r : records) {
      if (r.class_id != c) continue;
      d.push_back(r.dice_loss);
      (r.presence_gt ? dp : da).push_back(r.dice_loss);
      scores.push_back(r.det_prob);
      labels.push_back(r.presence_gt ? 1 : 0);
      if (!r.presence_gt) ++absent, halluc += r.hallucinated;
    }
    auto& cs = s.classes[static_cast<std::size_t>(c)];
    cs.dice_loss = mean_std(d);
    cs.dice_loss_absent = mean_std(da);
    cs.dice_loss_present = mean_std(dp);
    cs.absent_slices = da.size();
    cs.hallucination_rate = rates[static_cast<std::size_t>(c)];
    cs.detection_auc = detection_auc(scores, labels);
    if (cs.detection_auc) aucs.push_back(*cs.detection_auc);
  }
  for (const auto& r : records) {
    all.push_back(r.dice_loss);
    if (!r.presence_gt) all_absent.push_back(r.dice_loss);
  }
  s.dice_loss = mean_std(all);
  s.dice_loss_absent = mean_std(all_absent);
  if (absent > 0) s.hallucination_rate = static_cast<double>(halluc) / static_cast<double>(absent);
  if (!aucs.empty()) s.mean_detection_auc = mean_std(aucs).mean;
  return s;
}

}  // namespace n2
