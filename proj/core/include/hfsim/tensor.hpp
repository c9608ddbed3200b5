#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hfsim {

/// Dense row-major float32 tensor. Shape dims are all positive and
/// product(shape) == data.size() at all times.
struct TensorF {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  TensorF() = default;
  TensorF(std::vector<std::size_t> shape_, std::vector<float> data_);

  static TensorF zeros(std::vector<std::size_t> shape);
  static TensorF full(std::vector<std::size_t> shape, float value);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  bool same_shape(const TensorF& other) const { return shape == other.shape; }

  /// Throws if any element is NaN or Inf. `what` names the tensor in the message.
  void require_finite(const std::string& what) const;

  bool operator==(const TensorF& other) const = default;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_to_string(const std::vector<std::size_t>& shape);

/// max |a_i - b_i| over all elements; shapes must match.
float max_abs_diff(const TensorF& a, const TensorF& b);

}  // namespace hfsim
