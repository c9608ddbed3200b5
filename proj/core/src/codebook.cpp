#include "hfsim/codebook.hpp"

#include <stdexcept>

#include "hfsim/rng.hpp"

namespace hfsim {

Codebook Codebook::random(std::size_t size, std::size_t dim, std::uint64_t seed) {
  if (size < 2) throw std::invalid_argument("codebook: need at least 2 vectors");
  if (dim == 0) throw std::invalid_argument("codebook: dim must be >= 1");
  Codebook cb;
  cb.vectors = TensorF::zeros({size, dim});
  Rng rng(seed_mix(seed, 0xc0debULL));
  for (float& v : cb.vectors.data) v = rng.next_uniform(-0.5f, 0.5f);
  return cb;
}

void Codebook::validate() const {
  if (vectors.rank() != 2 || size() < 2) throw std::invalid_argument("codebook: vectors must be (M >= 2, d)");
  vectors.require_finite("codebook");
}

QuantizeResult quantize_nearest(const TensorF& h, const Codebook& codebook) {
  codebook.validate();
  std::size_t d = codebook.dim();
  if (h.rank() < 1 || h.shape.back() != d) {
    throw std::invalid_argument("quantize_nearest: last dim of input " + shape_to_string(h.shape) +
                                " must equal codebook dim " + std::to_string(d));
  }
  std::size_t positions = h.size() / d;
  QuantizeResult result;
  result.indices.dims.assign(h.shape.begin(), h.shape.end() - 1);
  result.indices.indices.resize(positions);
  result.quantized = TensorF::zeros(h.shape);
  for (std::size_t p = 0; p < positions; ++p) {
    const float* vec = h.data.data() + p * d;
    double best = 0.0;
    std::size_t best_m = 0;
    for (std::size_t m = 0; m < codebook.size(); ++m) {
      const float* code = codebook.vectors.data.data() + m * d;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double r = static_cast<double>(vec[j]) - static_cast<double>(code[j]);
        dist += r * r;
      }
      if (m == 0 || dist < best) {  // strict < keeps the lowest index on ties
        best = dist;
        best_m = m;
      }
    }
    result.indices.indices[p] = static_cast<std::uint32_t>(best_m);
    const float* code = codebook.vectors.data.data() + best_m * d;
    for (std::size_t j = 0; j < d; ++j) result.quantized.data[p * d + j] = code[j];
  }
  return result;
}

TensorF codebook_lookup(const IndexGrid& grid, const Codebook& codebook) {
  codebook.validate();
  std::size_t d = codebook.dim();
  std::vector<std::size_t> shape = grid.dims;
  shape.push_back(d);
  TensorF out = TensorF::zeros(shape);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    std::uint32_t m = grid.indices[p];
    if (m >= codebook.size()) {
      throw std::invalid_argument("codebook_lookup: index " + std::to_string(m) + " out of range");
    }
    const float* code = codebook.vectors.data.data() + static_cast<std::size_t>(m) * d;
    for (std::size_t j = 0; j < d; ++j) out.data[p * d + j] = code[j];
  }
  return out;
}

}  // namespace hfsim
