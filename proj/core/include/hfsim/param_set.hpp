#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "hfsim/tensor.hpp"

namespace hfsim {

/// Ordered, name-addressed collection of parameter tensors. Iteration order
/// is insertion order and is part of the serialization contract.
class ParamSet {
 public:
  ParamSet() = default;

  /// Throws if the name already exists.
  void add(std::string name, TensorF tensor);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  TensorF& at(const std::string& name);
  const TensorF& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Two ParamSets are compatible iff they hold the same names, in the same
  /// order, with the same shapes.
  bool compatible_with(const ParamSet& other) const;

  /// Total number of scalar elements across all tensors.
  std::size_t element_count() const;

  const std::vector<std::pair<std::string, TensorF>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, TensorF>>& entries() { return entries_; }

  /// Same names/shapes, all values zero.
  ParamSet zeros_like() const;

  /// this += scale * other (compatible sets only).
  void axpy(float scale, const ParamSet& other);

  /// Flatten all tensors into one vector, in entry order.
  std::vector<float> flatten() const;

  bool operator==(const ParamSet& other) const { return entries_ == other.entries_; }

 private:
  std::vector<std::pair<std::string, TensorF>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// max |a - b| over all entries of two compatible ParamSets.
float param_distance(const ParamSet& a, const ParamSet& b);

}  // namespace hfsim
