#include "n2/train/trainer.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "n2/error.hpp"
#include "n2/eval/metrics.hpp"
#include "n2/model/checkpoint.hpp"
#include "n2/ops.hpp"
#include "n2/train/inference.hpp"

namespace n2 {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(lambda_det >= 0) || !std::isfinite(lambda_det)) throw ConfigError("lambda_det must be a finite value >= 0");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (grad_clip && !(*grad_clip > 0)) throw ConfigError("grad_clip must be > 0 when set");
  if (!(scheduled_sampling >= 0 && scheduled_sampling <= 1)) throw ConfigError("scheduled_sampling must lie in [0, 1]");
  model.validate();
  tversky.validate();
  augment.validate();
  if (model.num_roi != model.num_classes)
    throw ConfigError("training needs one detection output per segmentation class (num_roi == num_classes)");
}

AdamWConfig TrainConfig::adamw() const { return {learning_rate, beta1, beta2, eps, weight_decay}; }

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps", c.eps},
       {"lambda_det", c.lambda_det},
       {"seed", c.seed},
       {"model", c.model},
       {"tversky", c.tversky},
       {"augment", c.augment},
       {"checkpoint_every", c.checkpoint_every},
       {"grad_clip", c.grad_clip ? nlohmann::json(*c.grad_clip) : nlohmann::json(nullptr)},
       {"scheduled_sampling", c.scheduled_sampling}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
  c.lambda_det = j.value("lambda_det", d.lambda_det);
  c.seed = j.value("seed", d.seed);
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.tversky = j.contains("tversky") ? j.at("tversky").get<TverskyParams>() : d.tversky;
  c.augment = j.contains("augment") ? j.at("augment").get<AugmentConfig>() : d.augment;
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.grad_clip.reset();
  if (j.contains("grad_clip") && !j.at("grad_clip").is_null()) c.grad_clip = j.at("grad_clip").get<double>();
  c.scheduled_sampling = j.value("scheduled_sampling", d.scheduled_sampling);
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

void to_json(nlohmann::json& j, const EpochMetrics& m) {
  j = {{"epoch", m.epoch},
       {"step", m.step},
       {"train_seg_loss", m.train_seg_loss},
       {"train_det_loss", opt_json(m.train_det_loss)},
       {"val_dice_loss_mean", opt_json(m.val_dice_loss_mean)},
       {"val_dice_loss_std", opt_json(m.val_dice_loss_std)},
       {"val_det_auc", opt_json(m.val_det_auc)}};
}

void from_json(const nlohmann::json& j, EpochMetrics& m) {
  m.epoch = j.at("epoch").get<int>();
  m.step = j.at("step").get<std::int64_t>();
  m.train_seg_loss = j.at("train_seg_loss").get<double>();
  m.train_det_loss = opt_from(j, "train_det_loss");
  m.val_dice_loss_mean = opt_from(j, "val_dice_loss_mean");
  m.val_dice_loss_std = opt_from(j, "val_dice_loss_std");
  m.val_det_auc = opt_from(j, "val_det_auc");
}

std::string metrics_csv_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + std::to_string(m.step) + "," + fmt(m.train_seg_loss) + "," +
         fmt(m.train_det_loss) + "," + fmt(m.val_dice_loss_mean) + "," + fmt(m.val_dice_loss_std) + "," +
         fmt(m.val_det_auc);
}

void write_metrics_csv(const fs::path& path, const std::vector<EpochMetrics>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write metrics log " + path.string());
  os << kMetricsHeader << "\n";
  for (const auto& r : rows) os << metrics_csv_row(r) << "\n";
}

Trainer::Trainer(TrainConfig config, std::vector<VolumeRecord> train, std::vector<VolumeRecord> val)
    : config_(std::move(config)), val_(std::move(val)) {
  config_.validate();
  if (train.empty()) throw DataError("the training split is empty");
  const auto& m = config_.model;
  for (const auto* set : {&train, &val_})
    for (const auto& v : *set) {
      v.validate();
      if (v.height != m.image_h || v.width != m.image_w || v.num_classes() != m.num_classes)
        throw DataError("subject " + v.subject_id + " does not match the model geometry (" +
                        std::to_string(m.num_classes) + " classes at " + std::to_string(m.image_h) + "x" +
                        std::to_string(m.image_w) + ")");
    }
  for (const auto& v : train) {
    auto s = build_slice_samples(v, ContextSource::ground_truth);
    for (std::size_t z = 0; z < s.size(); ++z)
      previous_.push_back(z == 0 ? -1 : static_cast<std::ptrdiff_t>(samples_.size() + z - 1));
    samples_.insert(samples_.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  norm_ = fit_normalization(samples_);
  normalize_samples(samples_, norm_);
  net_ = std::make_unique<N2Network>(m, derive_seed(config_.seed, {hash_string("model")}));
  optimizer_ = std::make_unique<AdamW>(net_->params(), config_.adamw());
}

SliceSample Trainer::training_view(std::size_t index, Rng& rng) const {
  const auto& base = samples_[index];
  if (config_.scheduled_sampling > 0 && rng.bernoulli(config_.scheduled_sampling) && previous_[index] >= 0) {
    const auto& prev = samples_[static_cast<std::size_t>(previous_[index])];
    const SliceSample* one[] = {&prev};
    const auto b = stack_batch(one);
    const auto pred = net_->predict(b.image, config_.model.context_enabled ? b.prev_mask : Tensor());
    SliceSample s = base;
    const auto p = pred.seg_probs.values();
    for (std::size_t i = 0; i < s.prev_mask.size(); ++i) s.prev_mask[i] = p[i] >= 0.5 ? 1.0 : 0.0;
    return augment(s, config_.augment, rng);
  }
  return augment(base, config_.augment, rng);
}

StepLosses Trainer::train_step(std::span<const SliceSample* const> batch) {
  const auto b = stack_batch(batch);
  const bool detect = config_.lambda_det != 0;
  auto fail = [&](const std::string& what, const std::string& terms) {
    std::string where;
    for (const auto* s : batch) where += " " + s->subject_id + ":" + std::to_string(s->slice_index);
    return TrainingError(what + " at epoch " + std::to_string(epoch_ + 1) + ", step " + std::to_string(step_ + 1) +
                         terms + "; batch:" + where);
  };
  auto finite = [](const Tensor& t) {
    return !t.defined() || std::all_of(t.values().begin(), t.values().end(), [](Real v) { return std::isfinite(v); });
  };
  net_->params().zero_grad();
  const auto out = net_->forward(b.image, config_.model.context_enabled ? b.prev_mask : Tensor(), {.detection = detect});
  if (!finite(out.seg_logits) || !finite(out.det_logits))
    throw fail("non-finite network output", std::string("; seg_logits ") + (finite(out.seg_logits) ? "finite" : "non-finite") +
                                                ", det_logits " + (finite(out.det_logits) ? "finite" : "non-finite"));
  const auto seg = tversky_loss(ops::sigmoid(out.seg_logits), b.gt_mask, config_.tversky);
  const auto det = detect ? detection_loss(out.det_logits, b.presence) : Tensor();
  Tensor loss;
  try {
    loss = combined_loss(seg, det, config_.lambda_det);
  } catch (const TrainingError& e) {
    throw fail(e.what(), "; seg_loss=" + fmt(seg.item()) + " det_loss=" + (det.defined() ? fmt(det.item()) : std::string("NA")));
  }
  loss.backward();
  if (config_.grad_clip) clip_gradients(net_->params(), *config_.grad_clip);
  optimizer_->step(net_->params());
  net_->params().zero_grad();
  ++step_;
  StepLosses r;
  r.seg = seg.item();
  if (detect) r.det = det.item();
  r.total = loss.item();
  return r;
}

EpochMetrics Trainer::run_epoch() {
  const int epoch = epoch_ + 1;
  std::vector<std::size_t> order(samples_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(derive_seed(config_.seed, {hash_string("shuffle"), static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);

  double seg_sum = 0, det_sum = 0;
  std::size_t batches = 0;
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<SliceSample> views;
    for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) {
      const auto& s = samples_[order[k]];
      Rng rng(derive_seed(config_.seed, {hash_string("augment"), hash_string(s.subject_id),
                                         static_cast<std::uint64_t>(s.slice_index), static_cast<std::uint64_t>(epoch)}));
      views.push_back(training_view(order[k], rng));
    }
    std::vector<const SliceSample*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v);
    const auto l = train_step(ptrs);
    seg_sum += l.seg;
    det_sum += l.det.value_or(0.0);
    ++batches;
  }
  epoch_ = epoch;
  EpochMetrics m = validate();
  m.train_seg_loss = seg_sum / static_cast<double>(batches);
  if (config_.lambda_det != 0) m.train_det_loss = det_sum / static_cast<double>(batches);
  history_.push_back(m);
  return m;
}

EpochMetrics Trainer::validate() const {
  EpochMetrics m;
  m.epoch = epoch_;
  m.step = step_;
  if (val_.empty()) return m;
  std::vector<SliceMetricsRecord> records;
  for (const auto& v : val_) {
    const auto pred = infer_volume(*net_, v, norm_, config_.model.gating_mode, config_.model.gating_threshold);
    const auto r = slice_records(v, pred);
    records.insert(records.end(), r.begin(), r.end());
  }
  const auto s = summarize(records, config_.model.num_classes);
  m.val_dice_loss_mean = s.dice_loss.mean;
  m.val_dice_loss_std = s.dice_loss.stddev;
  m.val_det_auc = s.mean_detection_auc;
  return m;
}

double Trainer::training_loss() const {
  NoGradGuard guard;
  const bool detect = config_.lambda_det != 0;
  double total = 0, weight = 0;
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < samples_.size(); start += bs) {
    std::vector<const SliceSample*> ptrs;
    for (std::size_t k = start; k < std::min(samples_.size(), start + bs); ++k) ptrs.push_back(&samples_[k]);
    const auto b = stack_batch(ptrs);
    const auto out = net_->forward(b.image, config_.model.context_enabled ? b.prev_mask : Tensor(), {.detection = detect});
    const auto seg = tversky_loss(ops::sigmoid(out.seg_logits), b.gt_mask, config_.tversky);
    const auto det = detect ? detection_loss(out.det_logits, b.presence) : Tensor();
    const double n = static_cast<double>(ptrs.size());
    total += n * combined_loss(seg, det, config_.lambda_det).item();
    weight += n;
  }
  return total / weight;
}

Archive Trainer::state_archive() const {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : history_) history.push_back(h);
  auto a = network_archive(*net_, {{"train_config", config_},
                                   {"norm_stats", norm_},
                                   {"class_names", class_names_},
                                   {"epoch", epoch_},
                                   {"step", step_},
                                   {"history", history}});
  optimizer_->save_to(a);
  return a;
}

void Trainer::save(const fs::path& path) const { write_archive(path, state_archive()); }

void Trainer::restore(const fs::path& path) {
  const auto a = read_archive(path);
  const auto& extra = a.meta.value("extra", nlohmann::json::object());
  if (!extra.contains("train_config") || !extra.contains("epoch"))
    throw DataError("checkpoint " + path.string() + " holds no training state");
  auto stored = extra.at("train_config");
  auto mine = nlohmann::json(config_);
  stored.erase("epochs");
  mine.erase("epochs");
  if (stored != mine) throw ConfigError("checkpoint " + path.string() + " was trained with a different configuration");
  const auto loaded = network_from_archive(a);
  net_->params().copy_values_from(loaded->params());
  optimizer_->load_from(a);
  norm_ = extra.at("norm_stats").get<NormStats>();
  epoch_ = extra.at("epoch").get<int>();
  step_ = extra.at("step").get<std::int64_t>();
  history_.clear();
  for (const auto& h : extra.at("history")) history_.push_back(h.get<EpochMetrics>());
}

std::vector<VolumeRecord> load_training_split(const Manifest& manifest, const std::string& split,
                                              const ModelConfig& model) {
  auto volumes = manifest.load_split(split);
  if (volumes.empty()) throw DataError("split '" + split + "' of the manifest is empty");
  for (auto& v : volumes) {
    std::vector<std::string> missing;
    v = select_classes(v, manifest.class_names, &missing);
    if (!missing.empty()) throw DataError("subject " + v.subject_id + " lacks class " + missing.front());
    if (v.height != model.image_h || v.width != model.image_w) v = resample_slices(v, model.image_h, model.image_w);
  }
  return volumes;
}

TrainResult train(const Manifest& manifest, const TrainConfig& config, const fs::path& out_dir,
                  const TrainOptions& options) {
  config.validate();
  if (static_cast<std::int64_t>(manifest.class_names.size()) != config.model.num_classes)
    throw ConfigError("the manifest lists " + std::to_string(manifest.class_names.size()) +
                      " classes but model.num_classes is " + std::to_string(config.model.num_classes));
  auto train_set = load_training_split(manifest, "train", config.model);
  std::vector<VolumeRecord> val_set;
  if (!manifest.split("val").empty()) val_set = load_training_split(manifest, "val", config.model);

  Trainer trainer(config, std::move(train_set), std::move(val_set));
  trainer.set_class_names(manifest.class_names);
  if (options.resume) trainer.restore(*options.resume);

  const auto ckpt_dir = out_dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  TrainResult result;
  std::optional<double> best;
  for (const auto& h : trainer.history())
    if (h.val_dice_loss_mean && (!best || *h.val_dice_loss_mean < *best)) best = h.val_dice_loss_mean;
  write_metrics_csv(out_dir / "metrics.csv", trainer.history());

  while (trainer.completed_epochs() < config.epochs) {
    const auto m = trainer.run_epoch();
    {
      std::ofstream os(out_dir / "metrics.csv", std::ios::app);
      os << metrics_csv_row(m) << "\n";
    }
    if (options.log) *options.log << "epoch " << m.epoch << " step " << m.step << " " << metrics_csv_row(m) << std::endl;
    if (m.epoch % config.checkpoint_every == 0 || m.epoch == config.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch-%04d.n2ckpt", m.epoch);
      trainer.save(ckpt_dir / name);
      std::ofstream(ckpt_dir / "LATEST", std::ios::trunc) << name << "\n";
    }
    if (m.val_dice_loss_mean && (!best || *m.val_dice_loss_mean < *best)) {
      best = m.val_dice_loss_mean;
      trainer.save(out_dir / "best.n2ckpt");
    }
  }
  trainer.save(out_dir / "final.n2ckpt");
  result.final_checkpoint = out_dir / "final.n2ckpt";
  result.history = trainer.history();
  return result;
}

}  // namespace n2
