#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2/data/augment.hpp"
#include "n2/data/manifest.hpp"
#include "n2/data/samples.hpp"
#include "n2/losses.hpp"
#include "n2/model/network.hpp"
#include "n2/train/optimizer.hpp"

namespace n2 {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lambda_det = 1.0;
  std::uint64_t seed = 0;
  /// Includes the gating mode and threshold used for validation and later
  /// inference. Training itself always uses ungated probabilities.
  ModelConfig model = ModelConfig::tiny();
  TverskyParams tversky;
  AugmentConfig augment;
  /// Write a checkpoint every this many epochs (the last epoch always).
  int checkpoint_every = 1;
  std::optional<double> grad_clip;
  /// Chance per training slice of replacing the ground-truth context with
  /// the model's own thresholded prediction of the previous slice.
  double scheduled_sampling = 0.0;

  void validate() const;
  AdamWConfig adamw() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// One metrics-log row. Absent values are written as NA.
struct EpochMetrics {
  int epoch = 0;
  std::int64_t step = 0;
  double train_seg_loss = 0;
  std::optional<double> train_det_loss;
  std::optional<double> val_dice_loss_mean;
  std::optional<double> val_dice_loss_std;
  std::optional<double> val_det_auc;
};

void to_json(nlohmann::json& j, const EpochMetrics& m);
void from_json(const nlohmann::json& j, EpochMetrics& m);

inline constexpr const char* kMetricsHeader =
    "epoch,step,train_seg_loss,train_det_loss,val_dice_loss_mean,val_dice_loss_std,val_det_auc";
/// Numbers printed with 17 significant digits.
std::string metrics_csv_row(const EpochMetrics& m);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& rows);

struct StepLosses {
  double seg = 0;
  std::optional<double> det;
  double total = 0;
};

/// Owns the network, optimizer and prepared samples of one training run.
///
/// Every random draw is derived from the config seed: weight init from
/// (seed, "model"), the epoch's shuffle from (seed, "shuffle", epoch), and
/// each sample's augmentation from (seed, "augment", subject, slice, epoch).
/// Resuming at an epoch boundary therefore reproduces an uninterrupted run.
class Trainer {
 public:
  /// Volumes must already carry the model geometry and class count.
  Trainer(TrainConfig config, std::vector<VolumeRecord> train, std::vector<VolumeRecord> val);

  const TrainConfig& config() const { return config_; }
  N2Network& net() { return *net_; }
  const N2Network& net() const { return *net_; }
  const AdamW& optimizer() const { return *optimizer_; }
  const NormStats& norm() const { return norm_; }
  const std::vector<SliceSample>& samples() const { return samples_; }
  int completed_epochs() const { return epoch_; }
  /// Stored with checkpoints for later inference and reporting.
  void set_class_names(std::vector<std::string> names) { class_names_ = std::move(names); }
  std::int64_t steps() const { return step_; }
  const std::vector<EpochMetrics>& history() const { return history_; }

  /// One optimizer step on the given (already augmented) samples.
  StepLosses train_step(std::span<const SliceSample* const> batch);
  /// Shuffled, augmented pass over the training samples, then validation.
  EpochMetrics run_epoch();
  /// Validation metrics of the current weights: hard Dice loss over every
  /// (slice, class) of the validation volumes and mean detection AUC.
  EpochMetrics validate() const;
  /// Combined loss over all training samples without augmentation, with
  /// ground-truth context and no parameter update.
  double training_loss() const;

  /// Weights, optimizer moments, counters, history and normalization.
  Archive state_archive() const;
  void save(const std::filesystem::path& path) const;
  /// Restores a state written by save(). The stored config must match this
  /// trainer's config in everything but the epoch count.
  void restore(const std::filesystem::path& path);

 private:
  SliceSample training_view(std::size_t index, Rng& rng) const;

  TrainConfig config_;
  std::vector<VolumeRecord> val_;
  std::vector<SliceSample> samples_;
  std::vector<std::ptrdiff_t> previous_;  // index of slice z-1 of the same subject, or -1
  NormStats norm_;
  std::unique_ptr<N2Network> net_;
  std::unique_ptr<AdamW> optimizer_;
  int epoch_ = 0;
  std::int64_t step_ = 0;
  std::vector<EpochMetrics> history_;
  std::vector<std::string> class_names_;
};

/// Loads a manifest split resampled to the model geometry with the
/// manifest's class order. Throws DataError when the split is empty.
std::vector<VolumeRecord> load_training_split(const Manifest& manifest, const std::string& split,
                                              const ModelConfig& model);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<EpochMetrics> history;
};

/// Full run into `out_dir`: metrics.csv, checkpoints/epoch-NNNN.n2ckpt with a
/// LATEST pointer, best.n2ckpt (lowest validation Dice loss) and
/// final.n2ckpt.
TrainResult train(const Manifest& manifest, const TrainConfig& config, const std::filesystem::path& out_dir,
                  const TrainOptions& options = {});

}  // namespace n2
