#include "n2/eval/compare.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

#include "n2/error.hpp"
#include "n2/eval/figure.hpp"

namespace n2 {

namespace fs = std::filesystem;

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::optional<double> diff(const std::optional<double>& a, const std::optional<double>& b) {
  if (a && b) return *b - *a;
  return std::nullopt;
}

void add_row(std::vector<DeltaRow>& rows, std::string metric, std::string cls, std::optional<double> a,
             std::optional<double> b) {
  rows.push_back({std::move(metric), std::move(cls), a, b, diff(a, b)});
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

Comparison compare(const RunReport& a, const RunReport& b) {
  if (a.class_names != b.class_names) throw DataError("reports " + a.run_id + " and " + b.run_id + " cover different classes");
  using Key = std::tuple<std::string, std::int64_t, std::int64_t>;
  std::map<Key, double> left, right;
  for (const auto& r : a.records) left[{r.subject_id, r.slice_index, r.class_id}] = r.dice_loss;
  for (const auto& r : b.records) right[{r.subject_id, r.slice_index, r.class_id}] = r.dice_loss;

  std::string missing;
  std::size_t count = 0;
  auto note = [&](const Key& k, const std::string& from) {
    if (++count <= 20)
      missing += "\n  " + std::get<0>(k) + " slice " + std::to_string(std::get<1>(k)) + " class " +
                 a.class_names.at(static_cast<std::size_t>(std::get<2>(k))) + " missing from " + from;
  };
  for (const auto& [k, v] : left)
    if (!right.count(k)) note(k, b.run_id);
  for (const auto& [k, v] : right)
    if (!left.count(k)) note(k, a.run_id);
  if (count > 0)
    throw DataError("reports " + a.run_id + " and " + b.run_id + " cover different slices (" + std::to_string(count) +
                    " unmatched records):" + missing + (count > 20 ? "\n  ..." : ""));

  Comparison c;
  c.run_a = a.run_id;
  c.run_b = b.run_id;
  c.class_names = a.class_names;
  for (const auto& [k, v] : left) c.records.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), v, right.at(k)});

  const auto &sa = a.summary, &sb = b.summary;
  add_row(c.deltas, "dice_loss_mean", "all", sa.dice_loss.mean, sb.dice_loss.mean);
  add_row(c.deltas, "dice_loss_std", "all", sa.dice_loss.stddev, sb.dice_loss.stddev);
  add_row(c.deltas, "dice_loss_absent_mean", "all", sa.dice_loss_absent.mean, sb.dice_loss_absent.mean);
  add_row(c.deltas, "hallucination_rate", "all", sa.hallucination_rate, sb.hallucination_rate);
  add_row(c.deltas, "mean_detection_auc", "all", sa.mean_detection_auc, sb.mean_detection_auc);
  for (std::size_t k = 0; k < c.class_names.size(); ++k) {
    const auto &ca = sa.classes[k], &cb = sb.classes[k];
    const auto& name = c.class_names[k];
    add_row(c.deltas, "dice_loss_mean", name, ca.dice_loss.mean, cb.dice_loss.mean);
    add_row(c.deltas, "dice_loss_std", name, ca.dice_loss.stddev, cb.dice_loss.stddev);
    add_row(c.deltas, "dice_loss_absent_mean", name,
            ca.absent_slices ? std::optional(ca.dice_loss_absent.mean) : std::nullopt,
            cb.absent_slices ? std::optional(cb.dice_loss_absent.mean) : std::nullopt);
    add_row(c.deltas, "hallucination_rate", name, ca.hallucination_rate, cb.hallucination_rate);
    add_row(c.deltas, "detection_auc", name, ca.detection_auc, cb.detection_auc);
  }
  return c;
}

SliceCurve slice_curve(const Comparison& c) {
  SliceCurve curve;
  std::map<std::pair<std::string, std::int64_t>, std::array<double, 3>> acc;  // sum a, sum b, n
  for (const auto& r : c.records) {
    auto& e = acc[{r.subject_id, r.slice_index}];
    e[0] += r.dice_loss_a;
    e[1] += r.dice_loss_b;
    e[2] += 1;
  }
  for (const auto& [k, e] : acc) {
    curve.labels.push_back(k.first + ":" + std::to_string(k.second));
    curve.a.push_back(e[0] / e[2]);
    curve.b.push_back(e[1] / e[2]);
  }
  return curve;
}

void write_comparison(const fs::path& dir, const Comparison& c) {
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "comparison.csv", std::ios::trunc);
    if (!os) throw DataError("cannot write " + (dir / "comparison.csv").string());
    os << "subject_id,slice_index,class,dice_loss_" << c.run_a << ",dice_loss_" << c.run_b << ",delta\n";
    for (const auto& r : c.records)
      os << r.subject_id << "," << r.slice_index << "," << c.class_names[static_cast<std::size_t>(r.class_id)] << ","
         << fmt(r.dice_loss_a) << "," << fmt(r.dice_loss_b) << "," << fmt(r.dice_loss_b - r.dice_loss_a) << "\n";
  }
  {
    std::ofstream os(dir / "summary_delta.csv", std::ios::trunc);
    if (!os) throw DataError("cannot write " + (dir / "summary_delta.csv").string());
    os << "metric,class," << c.run_a << "," << c.run_b << ",delta,note\n";
    char ref[200];
    std::snprintf(ref, sizeof ref, "reference_dice_loss,all,gated %.3f +/- %.3f,non-gated %.3f +/- %.3f,NA,\"%s\"\n",
                  PublishedReference::gated_mean, PublishedReference::gated_std, PublishedReference::non_gated_mean,
                  PublishedReference::non_gated_std, PublishedReference::label);
    os << ref;
    for (const auto& d : c.deltas)
      os << d.metric << "," << d.class_name << "," << fmt(d.a) << "," << fmt(d.b) << "," << fmt(d.delta) << ",\n";
  }
  {
    nlohmann::json deltas = nlohmann::json::array();
    for (const auto& d : c.deltas)
      deltas.push_back({{"metric", d.metric}, {"class", d.class_name}, {"a", opt(d.a)}, {"b", opt(d.b)}, {"delta", opt(d.delta)}});
    const nlohmann::json j = {
        {"run_a", c.run_a},
        {"run_b", c.run_b},
        {"class_names", c.class_names},
        {"records", c.records.size()},
        {"reference",
         {{"label", PublishedReference::label},
          {"gated", {{"mean", PublishedReference::gated_mean}, {"std", PublishedReference::gated_std}}},
          {"non_gated", {{"mean", PublishedReference::non_gated_mean}, {"std", PublishedReference::non_gated_std}}}}},
        {"deltas", deltas}};
    std::ofstream(dir / "comparison.json", std::ios::trunc) << j.dump(2) << "\n";
  }
  const auto curve = slice_curve(c);
  const std::vector<Series> series{{c.run_a, curve.a, {31, 119, 180}}, {c.run_b, curve.b, {255, 127, 14}}};
  std::vector<std::size_t> separators;
  for (std::size_t i = 1; i < curve.labels.size(); ++i)
    if (curve.labels[i].substr(0, curve.labels[i].rfind(':')) != curve.labels[i - 1].substr(0, curve.labels[i - 1].rfind(':')))
      separators.push_back(i);
  const std::string stem = c.run_a + "_vs_" + c.run_b + "_dice_curve";
  write_line_chart_png(dir / (stem + ".png"), series, 0.0, 1.0);
  write_line_chart_svg(dir / (stem + ".svg"), series, 0.0, 1.0, "Per-slice Dice loss: " + c.run_a + " vs " + c.run_b,
                       "slice (subjects in order, ascending z)", "Dice loss (mean over classes)", separators);
}

}  // namespace n2
