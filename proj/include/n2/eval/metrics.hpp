#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "n2/data/volume.hpp"
#include "n2/losses.hpp"
#include "n2/train/inference.hpp"

namespace n2 {

struct MeanStd {
  double mean = 0;
  double stddev = 0;  // population
  std::size_t count = 0;
};

/// Returns zeros with count 0 for an empty input.
MeanStd mean_std(std::span<const double> values);

/// Hard Dice loss of one binary plane pair with smooth 0; empty/empty is 0.
double hard_dice_loss(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

/// Rank-based ROC AUC (Mann-Whitney U with tied ranks averaged). Empty when
/// only one label value occurs.
std::optional<double> detection_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Per class: hallucinated / absent-slice records. Empty when the class has
/// no absent slices.
std::vector<std::optional<double>> hallucination_rate(const std::vector<SliceMetricsRecord>& records,
                                                      std::int64_t classes);

/// One record per (slice, class), slice-major. `gt` must carry the classes
/// of the prediction.
std::vector<SliceMetricsRecord> slice_records(const VolumeRecord& gt, const VolumeInference& pred);

struct ClassSummary {
  MeanStd dice_loss;
  MeanStd dice_loss_absent;   // slices without the structure
  MeanStd dice_loss_present;
  std::optional<double> hallucination_rate;
  std::optional<double> detection_auc;
  std::size_t absent_slices = 0;
};

struct ReportSummary {
  std::vector<ClassSummary> classes;
  MeanStd dice_loss;         // all records
  MeanStd dice_loss_absent;  // all records with presence_gt false
  std::optional<double> hallucination_rate;  // pooled over classes
  std::optional<double> mean_detection_auc;  // over classes with a defined AUC
  std::size_t records = 0;
};

ReportSummary summarize(const std::vector<SliceMetricsRecord>& records, std::int64_t classes);

}  // namespace n2
