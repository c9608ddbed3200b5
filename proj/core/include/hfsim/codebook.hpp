#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "hfsim/tensor.hpp"

namespace hfsim {

/// Discrete embedding table: `size` vectors of dimension `dim`, stored
/// row-major in `vectors` (shape {size, dim}).
struct Codebook {
  TensorF vectors;

  std::size_t size() const { return vectors.shape.empty() ? 0 : vectors.shape[0]; }
  std::size_t dim() const { return vectors.shape.size() < 2 ? 0 : vectors.shape[1]; }

  static Codebook random(std::size_t size, std::size_t dim, std::uint64_t seed);
  void validate() const;
};

/// Integer code grid produced by the quantizer; dims mirror the spatial
/// layout of the encoder output (last dim removed).
struct IndexGrid {
  std::vector<std::size_t> dims;
  std::vector<std::uint32_t> indices;

  std::size_t size() const { return indices.size(); }
  bool operator==(const IndexGrid&) const = default;
};

struct QuantizeResult {
  IndexGrid indices;
  TensorF quantized;  // same shape as the input, rows replaced by code vectors
};

/// Nearest-codebook-vector assignment over the last axis of `h` (which must
/// equal the codebook dim). Distances are squared L2 computed in float64;
/// ties break to the lowest index. Training passes gradients straight
/// through this map (identity on the encoder side).
QuantizeResult quantize_nearest(const TensorF& h, const Codebook& codebook);

/// Inverse lookup: expand an index grid back to code vectors (d-last layout).
TensorF codebook_lookup(const IndexGrid& grid, const Codebook& codebook);

}  // namespace hfsim
