#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "n2/eval/metrics.hpp"
#include "n2/model/config.hpp"
#include "n2/train/inference.hpp"

namespace n2 {

struct RunReport {
  std::string run_id;
  GatingMode gating_mode = GatingMode::hard;
  double gating_threshold = 0.5;
  std::vector<std::string> class_names;
  std::vector<SliceMetricsRecord> records;  // sorted by (subject, slice, class)
  ReportSummary summary;
};

/// Autoregressive inference on every subject, one record per (slice, class).
/// Throws ConfigError for an empty split.
RunReport evaluate(const TrainedModel& model, const std::vector<VolumeRecord>& subjects, GatingMode mode,
                   double threshold, const std::string& run_id);

/// Columns: run_id, subject_id, slice_index, class, presence_gt, det_prob,
/// dice_loss, predicted_any, hallucinated. Reals use 17 significant digits.
void write_report_csv(const std::filesystem::path& path, const RunReport& report);
/// Per-class and overall aggregates; undefined rates and AUCs are null.
void write_summary_json(const std::filesystem::path& path, const RunReport& report);
/// report.csv and summary.json in `dir`.
void write_report(const std::filesystem::path& dir, const RunReport& report);
/// Reads a directory written by write_report and recomputes the summary.
/// Throws DataError when files are missing or malformed.
RunReport read_report(const std::filesystem::path& dir);

}  // namespace n2
