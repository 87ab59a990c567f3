#include "n2/model/params.hpp"

#include <algorithm>
#include <cmath>

#include "n2/error.hpp"

namespace n2 {

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Tensor param(value.shape(), std::vector<Real>(value.values().begin(), value.values().end()), true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, param);
  return param;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

std::int64_t ParamStore::total_elements() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.size() != size()) throw ShapeError("parameter stores differ in size");
  for (auto& [name, t] : entries_) {
    const Tensor src = other.get(name);
    if (src.shape() != t.shape())
      throw ShapeError("parameter '" + name + "' shape " + shape_str(src.shape()) + " vs " +
                       shape_str(t.shape()));
    std::copy(src.values().begin(), src.values().end(), t.mutable_values().begin());
  }
}

Tensor xavier_uniform(std::int64_t in, std::int64_t out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<Real> v(static_cast<std::size_t>(in * out));
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor({in, out}, std::move(v));
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  std::vector<Real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace n2
