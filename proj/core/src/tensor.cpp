#include "hfsim/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hfsim {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

TensorF::TensorF(std::vector<std::size_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("TensorF: zero dimension in shape " + shape_to_string(shape));
  }
  if (shape_product(shape) != data.size()) {
    throw std::invalid_argument("TensorF: shape " + shape_to_string(shape) + " does not match data length " +
                                std::to_string(data.size()));
  }
}

TensorF TensorF::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_product(shape);
  return TensorF(std::move(shape), std::vector<float>(n, 0.0f));
}

TensorF TensorF::full(std::vector<std::size_t> shape, float value) {
  std::size_t n = shape_product(shape);
  return TensorF(std::move(shape), std::vector<float>(n, value));
}

void TensorF::require_finite(const std::string& what) const {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw std::runtime_error(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

float max_abs_diff(const TensorF& a, const TensorF& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff: shape mismatch " + shape_to_string(a.shape) + " vs " +
                                shape_to_string(b.shape));
  }
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    float d = std::fabs(a.data[i] - b.data[i]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace hfsim
