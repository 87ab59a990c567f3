#include "n2/train/optimizer.hpp"

#include <cmath>

#include "n2/error.hpp"

namespace n2 {

void adamw_update(std::span<Real> w, std::span<const Real> g, AdamSlot& slot, const AdamWConfig& cfg) {
  if (g.size() != w.size()) throw ShapeError("adamw_update: gradient size differs from weight size");
  if (slot.m.empty()) {
    slot.m.assign(w.size(), 0.0);
    slot.v.assign(w.size(), 0.0);
  }
  ++slot.steps;
  const double t = static_cast<double>(slot.steps);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
  for (std::size_t i = 0; i < w.size(); ++i) {
    slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g[i];
    slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = slot.m[i] / bc1;
    const double v_hat = slot.v[i] / bc2;
    w[i] = w[i] * decay - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

AdamW::AdamW(const ParamStore& params, AdamWConfig config) : config_(config) {
  if (!(config_.learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (!(config_.weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(config_.beta1 >= 0 && config_.beta1 < 1 && config_.beta2 >= 0 && config_.beta2 < 1))
    throw ConfigError("Adam betas must lie in [0, 1)");
  for (const auto& [name, t] : params.entries()) names_.push_back(name);
  slots_.resize(names_.size());
}

void AdamW::step(ParamStore& params) {
  if (params.size() != names_.size()) throw ConfigError("AdamW: parameter set changed");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    Tensor t = params.entries()[i].second;
    if (!t.has_grad()) continue;
    adamw_update(t.mutable_values(), t.grad(), slots_[i], config_);
  }
}

const AdamSlot& AdamW::slot(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return slots_[i];
  throw ConfigError("AdamW: unknown parameter " + name);
}

void AdamW::save_to(Archive& archive) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& s = slots_[i];
    const auto n = static_cast<std::int64_t>(s.m.size());
    archive.tensors.emplace_back("adam_m/" + names_[i], Tensor({n}, s.m));
    archive.tensors.emplace_back("adam_v/" + names_[i], Tensor({n}, s.v));
    archive.tensors.emplace_back("adam_t/" + names_[i], Tensor({1}, {static_cast<Real>(s.steps)}));
  }
}

void AdamW::load_from(const Archive& archive) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto* m = archive.find("adam_m/" + names_[i]);
    const auto* v = archive.find("adam_v/" + names_[i]);
    const auto* t = archive.find("adam_t/" + names_[i]);
    if (!m || !v || !t) throw DataError("checkpoint lacks optimizer state for " + names_[i]);
    if (m->numel() != v->numel()) throw DataError("optimizer moments disagree in size for " + names_[i]);
    slots_[i].m.assign(m->values().begin(), m->values().end());
    slots_[i].v.assign(v->values().begin(), v->values().end());
    slots_[i].steps = static_cast<std::int64_t>(t->item());
  }
}

double gradient_norm(const ParamStore& params) {
  double sq = 0;
  for (const auto& [name, t] : params.entries())
    if (t.has_grad())
      for (Real g : t.grad()) sq += g * g;
  return std::sqrt(sq);
}

double clip_gradients(ParamStore& params, double max_norm) {
  const double norm = gradient_norm(params);
  if (norm > max_norm && norm > 0) {
    const double f = max_norm / norm;
    for (const auto& [name, t] : params.entries())
      if (t.has_grad())
        for (Real& g : t.node()->grad) g *= f;
  }
  return norm;
}

}  // namespace n2
