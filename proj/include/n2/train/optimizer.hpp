#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "n2/model/checkpoint.hpp"
#include "n2/model/params.hpp"

namespace n2 {

struct AdamWConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Per-tensor optimizer state.
struct AdamSlot {
  std::vector<Real> m;
  std::vector<Real> v;
  std::int64_t steps = 0;
};

/// One decoupled-weight-decay Adam step on a flat tensor:
///   w <- w (1 - lr wd)
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   w <- w - lr m_hat / (sqrt(v_hat) + eps)
void adamw_update(std::span<Real> w, std::span<const Real> g, AdamSlot& slot, const AdamWConfig& cfg);

/// AdamW over a ParamStore. Tensors without a gradient are left untouched,
/// weight decay included, and keep their own step counters.
class AdamW {
 public:
  AdamW(const ParamStore& params, AdamWConfig config);

  const AdamWConfig& config() const { return config_; }
  void step(ParamStore& params);
  const AdamSlot& slot(const std::string& name) const;

  /// Moments as "adam_m/<name>", "adam_v/<name>" and "adam_t/<name>".
  void save_to(Archive& archive) const;
  /// Throws DataError when a moment is missing or has the wrong size.
  void load_from(const Archive& archive);

 private:
  AdamWConfig config_;
  std::vector<std::string> names_;
  std::vector<AdamSlot> slots_;
};

/// Global L2 norm of all present gradients.
double gradient_norm(const ParamStore& params);
/// Rescales gradients so their global norm is at most max_norm. Returns the
/// norm before clipping.
double clip_gradients(ParamStore& params, double max_norm);

}  // namespace n2
