#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "hfsim/codebook.hpp"
#include "hfsim/model.hpp"
#include "hfsim/optimizer.hpp"
#include "hfsim/param_set.hpp"

namespace hfsim {

/// Two-level encoder-quantizer-decoder. The top latent grid is the image
/// side / 8, the bottom side / 4; the bottom encoder sees the image stacked
/// with the upsampled top codes, and the decoder maps both code grids back
/// to an image of the input shape. All trainable state (encoder, decoder and
/// both codebooks) lives in `params`.
struct QuantizedAutoencoder {
  ModelGraph enc_top;
  ModelGraph enc_bottom;
  ModelGraph dec;
  std::size_t codebook_size = 0;
  std::size_t embed_dim = 0;
  std::vector<std::size_t> image_shape;  // {C, H, W}
  std::size_t top_grid = 0;
  std::size_t bottom_grid = 0;
  ParamSet params;  // enc_top.* / enc_bottom.* / dec.* / codebook_top / codebook_bottom
  std::uint64_t seed = 0;
  bool codebooks_seeded = false;  // codebooks re-seed from encoder outputs on the first training batch
  std::uint64_t train_steps = 0;
  std::vector<std::uint32_t> top_unused_steps, bottom_unused_steps;  // dead-code restart bookkeeping

  Codebook codebook_top() const;
  Codebook codebook_bottom() const;
};

/// Image side must be square and divisible by 8.
QuantizedAutoencoder make_autoencoder(const std::vector<std::size_t>& image_shape, std::size_t codebook_size,
                                      std::size_t embed_dim, std::uint64_t seed);

/// Frozen decode-side state: enough to synthesize images from stored codes.
struct DecoderSnapshot {
  ModelGraph dec;
  ParamSet dec_params;
  Codebook cb_top;
  Codebook cb_bottom;
  std::vector<std::size_t> image_shape;
};

DecoderSnapshot snapshot_decoder(const QuantizedAutoencoder& ae);

struct EncodeResult {
  IndexGrid top;     // dims {N, g, g}
  IndexGrid bottom;  // dims {N, g, g}
};

EncodeResult encode_images(const QuantizedAutoencoder& ae, const TensorF& images);

/// Decode stored index grids (dims {N, g, g}) back to images.
TensorF decode_codes(const DecoderSnapshot& snapshot, const IndexGrid& top, const IndexGrid& bottom);

struct GeneratorLoss {
  double total = 0.0;
  double reconstruction = 0.0;  // ||x - D(e)||^2, elementwise mean
  double codebook = 0.0;        // ||sg[E(x)] - e||^2
  double commitment = 0.0;      // ||sg[e] - E(x)||^2 (weighted separately)
};

/// One training step on a batch: reconstruction + codebook + commitment
/// losses, straight-through gradients into both encoders, gradient-based
/// codebook updates. Mutates ae.params and the optimizer.
GeneratorLoss generator_loss_and_step(QuantizedAutoencoder& ae, const TensorF& batch, OptimizerState& opt,
                                      float commitment_weight);

/// Reconstruction error of the current autoencoder on a batch (no update).
double reconstruction_mse(const QuantizedAutoencoder& ae, const TensorF& batch);

/// Sub-ParamSet with the given dotted prefix stripped ("dec." etc).
ParamSet extract_prefixed(const ParamSet& params, const std::string& prefix);

}  // namespace hfsim
