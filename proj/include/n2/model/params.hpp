#pragma once

#include <map>
#include <string>
#include <vector>

#include "n2/random.hpp"
#include "n2/tensor.hpp"

namespace n2 {

/// Named, ordered collection of trainable tensors.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::int64_t total_elements() const;

  void zero_grad();
  /// Copies values from another store with identical names and shapes.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Initializers. Weights are (in, out).
Tensor xavier_uniform(std::int64_t in, std::int64_t out, Rng& rng);
Tensor normal_init(Shape shape, double stddev, Rng& rng);

}  // namespace n2
