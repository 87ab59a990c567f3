#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "n2/eval/report.hpp"

namespace n2 {

/// Headline values reported for the original gated and non-gated models;
/// shown next to desk-scale results for orientation only.
struct PublishedReference {
  static constexpr double gated_mean = 0.013;
  static constexpr double gated_std = 0.036;
  static constexpr double non_gated_mean = 0.732;
  static constexpr double non_gated_std = 0.314;
  static constexpr const char* label = "paper-reported, not reproduced";
};

struct PairedRecord {
  std::string subject_id;
  std::int64_t slice_index = 0;
  std::int64_t class_id = 0;
  double dice_loss_a = 0;
  double dice_loss_b = 0;
};

struct DeltaRow {
  std::string metric;
  std::string class_name;  // "all" for pooled rows
  std::optional<double> a;
  std::optional<double> b;
  std::optional<double> delta;  // b - a, when both are defined
};

struct Comparison {
  std::string run_a;
  std::string run_b;
  std::vector<std::string> class_names;
  std::vector<PairedRecord> records;
  std::vector<DeltaRow> deltas;
};

/// Pairs the records of two reports. Throws DataError when the class sets
/// differ or when a (subject, slice, class) is missing from either side;
/// the message lists the missing slices.
Comparison compare(const RunReport& a, const RunReport& b);

/// Per-slice Dice loss averaged over classes, in (subject, slice) order.
struct SliceCurve {
  std::vector<std::string> labels;  // "subject:slice"
  std::vector<double> a;
  std::vector<double> b;
};
SliceCurve slice_curve(const Comparison& c);

/// comparison.csv (paired per-record Dice loss), summary_delta.csv (with the
/// published reference row), comparison.json, and the Dice-curve figure as
/// <run_a>_vs_<run_b>_dice_curve.png and .svg.
void write_comparison(const std::filesystem::path& dir, const Comparison& c);

}  // namespace n2
