#include "n2/train/inference.hpp"

#include "n2/error.hpp"
#include "n2/model/checkpoint.hpp"

namespace n2 {

VolumeInference infer_slices(const SlicePredictor& predict, const std::vector<Real>& images, std::int64_t depth,
                             std::int64_t height, std::int64_t width, std::int64_t classes, bool use_context) {
  const std::int64_t plane = height * width;
  if (static_cast<std::int64_t>(images.size()) != depth * plane)
    throw ShapeError("infer_slices: image buffer does not hold " + std::to_string(depth) + " slices");
  VolumeInference out;
  out.depth = depth;
  out.classes = classes;
  out.height = height;
  out.width = width;
  out.probs.assign(static_cast<std::size_t>(classes * depth * plane), 0.0);
  out.masks.assign(out.probs.size(), 0);
  out.gate_probs.assign(static_cast<std::size_t>(depth * classes), 0.0);

  std::vector<Real> context(static_cast<std::size_t>(classes * plane), 0.0);
  for (std::int64_t z = 0; z < depth; ++z) {
    const auto first = images.begin() + z * plane;
    const Tensor image({1, 1, height, width}, std::vector<Real>(first, first + plane));
    const Tensor prev = use_context ? Tensor({1, classes, height, width}, context) : Tensor();
    const auto pred = predict(image, prev);
    if (pred.seg_probs.shape() != Shape{1, classes, height, width})
      throw TrainingError("predictor returned " + shape_str(pred.seg_probs.shape()) + " for slice " + std::to_string(z));
    if (z == 0) {
      out.rois = pred.det_probs.dim(1);
      out.det_probs.assign(static_cast<std::size_t>(depth * out.rois), 0.0);
    }
    std::copy(pred.det_probs.values().begin(), pred.det_probs.values().end(),
              out.det_probs.begin() + z * out.rois);
    const auto p = pred.seg_probs.values();
    for (std::int64_t c = 0; c < classes; ++c) {
      out.gate_probs[static_cast<std::size_t>(z * classes + c)] = gate_confidence(pred.det_probs, 0, c, classes);
      for (std::int64_t i = 0; i < plane; ++i) {
        const Real v = p[static_cast<std::size_t>(c * plane + i)];
        const auto dst = static_cast<std::size_t>((c * depth + z) * plane + i);
        out.probs[dst] = v;
        out.masks[dst] = v >= 0.5 ? 1 : 0;
        context[static_cast<std::size_t>(c * plane + i)] = out.masks[dst];
      }
    }
  }
  return out;
}

VolumeInference infer_volume(const N2Network& net, const VolumeRecord& volume, const NormStats& norm,
                             GatingMode mode, double threshold) {
  const auto& cfg = net.config();
  if (volume.height != cfg.image_h || volume.width != cfg.image_w)
    throw DataError("volume " + volume.subject_id + " is " + std::to_string(volume.height) + "x" +
                    std::to_string(volume.width) + " but the model expects " + std::to_string(cfg.image_h) + "x" +
                    std::to_string(cfg.image_w));
  if (volume.num_classes() != 0 && volume.num_classes() != cfg.num_classes)
    throw DataError("volume " + volume.subject_id + " has " + std::to_string(volume.num_classes()) +
                    " classes but the model predicts " + std::to_string(cfg.num_classes));
  if (cfg.in_channels != 1) throw ConfigError("inference supports single-channel models only");

  std::vector<Real> images(volume.image.begin(), volume.image.end());
  const auto plane = static_cast<std::ptrdiff_t>(volume.slice_size());
  for (std::int64_t z = 0; z < volume.depth; ++z)
    normalize_image(std::span<Real>(images.data() + z * plane, static_cast<std::size_t>(plane)), norm,
                    "subject " + volume.subject_id + " slice " + std::to_string(z));
  const auto predict = [&](const Tensor& image, const Tensor& prev) { return net.predict(image, prev, mode, threshold); };
  return infer_slices(predict, images, volume.depth, volume.height, volume.width, cfg.num_classes, cfg.context_enabled);
}

TrainedModel load_trained_model(const std::filesystem::path& path) {
  TrainedModel m;
  m.net = load_checkpoint(path, &m.extra);
  if (!m.extra.contains("norm_stats")) throw DataError("checkpoint " + path.string() + " has no normalization statistics");
  m.norm = m.extra.at("norm_stats").get<NormStats>();
  m.class_names = m.extra.value("class_names", std::vector<std::string>{});
  return m;
}

}  // namespace n2
