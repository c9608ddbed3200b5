#include "hfsim/autoencoder.hpp"

#include <cmath>
#include <stdexcept>

#include "hfsim/engine.hpp"
#include "hfsim/rng.hpp"

namespace hfsim {

namespace {

// NCHW <-> NHWC transposes; the quantizer wants the embedding dim last.
TensorF to_channels_last(const TensorF& x) {
  std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  TensorF out = TensorF::zeros({n, h, w, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t cc = 0; cc < c; ++cc)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          out.data[((i * h + y) * w + xx) * c + cc] = x.data[((i * c + cc) * h + y) * w + xx];
  return out;
}

TensorF to_channels_first(const TensorF& x) {
  std::size_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3];
  TensorF out = TensorF::zeros({n, c, h, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        for (std::size_t cc = 0; cc < c; ++cc)
          out.data[((i * c + cc) * h + y) * w + xx] = x.data[((i * h + y) * w + xx) * c + cc];
  return out;
}

TensorF upsample_nearest(const TensorF& x, std::size_t factor) {
  std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  TensorF out = TensorF::zeros({n, c, h * factor, w * factor});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t cc = 0; cc < c; ++cc)
      for (std::size_t y = 0; y < h * factor; ++y)
        for (std::size_t xx = 0; xx < w * factor; ++xx)
          out.data[((i * c + cc) * h * factor + y) * w * factor + xx] =
              x.data[((i * c + cc) * h + y / factor) * w + xx / factor];
  return out;
}

// Adjoint of upsample_nearest: sum each factor x factor block.
TensorF downsample_sum(const TensorF& x, std::size_t factor) {
  std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2] / factor, w = x.shape[3] / factor;
  TensorF out = TensorF::zeros({n, c, h, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t cc = 0; cc < c; ++cc)
      for (std::size_t y = 0; y < x.shape[2]; ++y)
        for (std::size_t xx = 0; xx < x.shape[3]; ++xx)
          out.data[((i * c + cc) * h + y / factor) * w + xx / factor] +=
              x.data[((i * c + cc) * x.shape[2] + y) * x.shape[3] + xx];
  return out;
}

TensorF concat_channels(const TensorF& a, const TensorF& b) {
  std::size_t n = a.shape[0], ca = a.shape[1], cb = b.shape[1], h = a.shape[2], w = a.shape[3];
  TensorF out = TensorF::zeros({n, ca + cb, h, w});
  std::size_t plane = h * w;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data.begin() + static_cast<std::ptrdiff_t>(i * ca * plane), ca * plane,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * (ca + cb) * plane));
    std::copy_n(b.data.begin() + static_cast<std::ptrdiff_t>(i * cb * plane), cb * plane,
                out.data.begin() + static_cast<std::ptrdiff_t>((i * (ca + cb) + ca) * plane));
  }
  return out;
}

TensorF slice_channels(const TensorF& x, std::size_t first, std::size_t count) {
  std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  TensorF out = TensorF::zeros({n, count, h, w});
  std::size_t plane = h * w;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>((i * c + first) * plane), count * plane,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * count * plane));
  }
  return out;
}

TensorF concat_flat(const TensorF& a, const TensorF& b) {
  std::size_t n = a.shape[0];
  std::size_t da = a.size() / n, db = b.size() / n;
  TensorF out = TensorF::zeros({n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data.begin() + static_cast<std::ptrdiff_t>(i * da), da,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * (da + db)));
    std::copy_n(b.data.begin() + static_cast<std::ptrdiff_t>(i * db), db,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * (da + db) + da));
  }
  return out;
}

std::pair<TensorF, TensorF> split_flat(const TensorF& z, std::vector<std::size_t> shape_a,
                                       std::vector<std::size_t> shape_b) {
  std::size_t n = z.shape[0];
  TensorF a = TensorF::zeros(std::move(shape_a));
  TensorF b = TensorF::zeros(std::move(shape_b));
  std::size_t da = a.size() / n, db = b.size() / n;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(z.data.begin() + static_cast<std::ptrdiff_t>(i * (da + db)), da,
                a.data.begin() + static_cast<std::ptrdiff_t>(i * da));
    std::copy_n(z.data.begin() + static_cast<std::ptrdiff_t>(i * (da + db) + da), db,
                b.data.begin() + static_cast<std::ptrdiff_t>(i * db));
  }
  return {std::move(a), std::move(b)};
}

void add_prefixed(ParamSet& combined, const std::string& prefix, const ParamSet& sub) {
  for (const auto& [name, t] : sub.entries()) {
    auto& dst = combined.at(prefix + name).data;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += t.data[j];
  }
}

}  // namespace

ParamSet extract_prefixed(const ParamSet& params, const std::string& prefix) {
  ParamSet out;
  for (const auto& [name, t] : params.entries()) {
    if (name.rfind(prefix, 0) == 0) out.add(name.substr(prefix.size()), t);
  }
  return out;
}

Codebook QuantizedAutoencoder::codebook_top() const { return Codebook{params.at("codebook_top")}; }
Codebook QuantizedAutoencoder::codebook_bottom() const { return Codebook{params.at("codebook_bottom")}; }

QuantizedAutoencoder make_autoencoder(const std::vector<std::size_t>& image_shape, std::size_t codebook_size,
                                      std::size_t embed_dim, std::uint64_t seed) {
  if (image_shape.size() != 3) throw std::invalid_argument("autoencoder: image shape must be {C, H, W}");
  std::size_t c = image_shape[0], h = image_shape[1], w = image_shape[2];
  if (h != w) throw std::invalid_argument("autoencoder: image must be square");
  if (h < 8 || h % 8 != 0) throw std::invalid_argument("autoencoder: image side must be a multiple of 8");
  if (codebook_size < 2) throw std::invalid_argument("autoencoder: codebook size must be >= 2");
  if (embed_dim == 0) throw std::invalid_argument("autoencoder: embed dim must be >= 1");

  QuantizedAutoencoder ae;
  ae.seed = seed;
  ae.codebook_size = codebook_size;
  ae.embed_dim = embed_dim;
  ae.image_shape = image_shape;
  ae.top_grid = h / 8;
  ae.bottom_grid = h / 4;

  ae.enc_top.layers = {LayerSpec::conv2d(c, 6, 3, 1, 1),  LayerSpec::relu(), LayerSpec::avg_pool(2, 2),
                       LayerSpec::conv2d(6, 12, 3, 1, 1), LayerSpec::relu(), LayerSpec::avg_pool(2, 2),
                       LayerSpec::conv2d(12, embed_dim, 3, 1, 1), LayerSpec::avg_pool(2, 2)};
  ae.enc_top.loss_kind = LossKind::Mse;
  ae.enc_top.output_kind = OutputKind::ScalarRegression;

  ae.enc_bottom.layers = {LayerSpec::avg_pool(2, 2), LayerSpec::conv2d(c + embed_dim, 12, 3, 1, 1),
                          LayerSpec::relu(), LayerSpec::conv2d(12, embed_dim, 3, 1, 1),
                          LayerSpec::avg_pool(2, 2)};
  ae.enc_bottom.loss_kind = LossKind::Mse;
  ae.enc_bottom.output_kind = OutputKind::ScalarRegression;

  std::size_t z_dim = embed_dim * (ae.top_grid * ae.top_grid + ae.bottom_grid * ae.bottom_grid);
  std::size_t out_dim = c * h * w;
  std::size_t hidden = std::max<std::size_t>(64, out_dim);
  ae.dec.layers = {LayerSpec::dense(z_dim, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, out_dim)};
  ae.dec.loss_kind = LossKind::Mse;
  ae.dec.output_kind = OutputKind::ScalarRegression;

  ParamSet top_init = init_params(ae.enc_top, seed_mix(seed, 0xae1ULL));
  ParamSet bottom_init = init_params(ae.enc_bottom, seed_mix(seed, 0xae2ULL));
  ParamSet dec_init = init_params(ae.dec, seed_mix(seed, 0xae3ULL));
  for (const auto& [name, t] : top_init.entries()) ae.params.add("enc_top." + name, t);
  for (const auto& [name, t] : bottom_init.entries()) ae.params.add("enc_bottom." + name, t);
  for (const auto& [name, t] : dec_init.entries()) ae.params.add("dec." + name, t);
  ae.params.add("codebook_top", Codebook::random(codebook_size, embed_dim, seed_mix(seed, 0xae4ULL)).vectors);
  ae.params.add("codebook_bottom", Codebook::random(codebook_size, embed_dim, seed_mix(seed, 0xae5ULL)).vectors);
  return ae;
}

DecoderSnapshot snapshot_decoder(const QuantizedAutoencoder& ae) {
  DecoderSnapshot snap;
  snap.dec = ae.dec;
  snap.dec_params = extract_prefixed(ae.params, "dec.");
  snap.cb_top = ae.codebook_top();
  snap.cb_bottom = ae.codebook_bottom();
  snap.image_shape = ae.image_shape;
  return snap;
}

namespace {

struct ForwardState {
  ForwardTrace top_trace, bottom_trace, dec_trace;
  TensorF h_top_dlast, h_bottom_dlast;
  QuantizeResult q_top, q_bottom;
  TensorF reconstruction;  // (N, C, H, W)
};

ForwardState ae_forward(const QuantizedAutoencoder& ae, const TensorF& batch, ParamSet& enc_top_params,
                        ParamSet& enc_bottom_params, ParamSet& dec_params) {
  if (batch.rank() != 4 || std::vector<std::size_t>(batch.shape.begin() + 1, batch.shape.end()) != ae.image_shape) {
    throw std::invalid_argument("autoencoder: batch shape " + shape_to_string(batch.shape) +
                                " does not match image shape");
  }
  enc_top_params = extract_prefixed(ae.params, "enc_top.");
  enc_bottom_params = extract_prefixed(ae.params, "enc_bottom.");
  dec_params = extract_prefixed(ae.params, "dec.");

  ForwardState st;
  TensorF h_top = forward_traced(ae.enc_top, enc_top_params, batch, st.top_trace);
  st.h_top_dlast = to_channels_last(h_top);
  st.q_top = quantize_nearest(st.h_top_dlast, ae.codebook_top());

  TensorF cond = upsample_nearest(to_channels_first(st.q_top.quantized), ae.image_shape[1] / ae.top_grid);
  TensorF stacked = concat_channels(batch, cond);
  TensorF h_bottom = forward_traced(ae.enc_bottom, enc_bottom_params, stacked, st.bottom_trace);
  st.h_bottom_dlast = to_channels_last(h_bottom);
  st.q_bottom = quantize_nearest(st.h_bottom_dlast, ae.codebook_bottom());

  TensorF z = concat_flat(st.q_top.quantized, st.q_bottom.quantized);
  TensorF flat = forward_traced(ae.dec, dec_params, z, st.dec_trace);
  std::size_t n = batch.shape[0];
  st.reconstruction = TensorF({n, ae.image_shape[0], ae.image_shape[1], ae.image_shape[2]}, std::move(flat.data));
  return st;
}

}  // namespace

EncodeResult encode_images(const QuantizedAutoencoder& ae, const TensorF& images) {
  ParamSet a, b, c;
  ForwardState st = ae_forward(ae, images, a, b, c);
  return {std::move(st.q_top.indices), std::move(st.q_bottom.indices)};
}

TensorF decode_codes(const DecoderSnapshot& snapshot, const IndexGrid& top, const IndexGrid& bottom) {
  TensorF q_top = codebook_lookup(top, snapshot.cb_top);
  TensorF q_bottom = codebook_lookup(bottom, snapshot.cb_bottom);
  TensorF z = concat_flat(q_top, q_bottom);
  TensorF flat = forward(snapshot.dec, snapshot.dec_params, z);
  std::size_t n = top.dims[0];
  return TensorF({n, snapshot.image_shape[0], snapshot.image_shape[1], snapshot.image_shape[2]}, std::move(flat.data));
}

double reconstruction_mse(const QuantizedAutoencoder& ae, const TensorF& batch) {
  ParamSet a, b, c;
  ForwardState st = ae_forward(ae, batch, a, b, c);
  double mse = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    double r = static_cast<double>(st.reconstruction.data[j]) - static_cast<double>(batch.data[j]);
    mse += r * r;
  }
  return mse / static_cast<double>(batch.size());
}

namespace {

// Gradient-trained codebooks only move codes that win assignments, so codes
// initialized far from the encoder's output distribution stay dead and the
// quantizer collapses. Re-seed both books from actual encoder outputs on the
// first training batch.
void seed_codebooks_from_batch(QuantizedAutoencoder& ae, const TensorF& batch) {
  ParamSet enc_top_params = extract_prefixed(ae.params, "enc_top.");
  ParamSet enc_bottom_params = extract_prefixed(ae.params, "enc_bottom.");
  ForwardTrace unused;
  TensorF h_top = forward_traced(ae.enc_top, enc_top_params, batch, unused);
  TensorF h_top_dlast = to_channels_last(h_top);

  std::size_t d = ae.embed_dim;
  Rng rng(seed_mix(ae.seed, 0xcb5eedULL));
  auto seed_book = [&](TensorF& book, const TensorF& h_dlast) {
    std::size_t positions = h_dlast.size() / d;
    std::size_t m_count = book.shape[0];
    for (std::size_t m = 0; m < m_count; ++m) {
      std::size_t p = rng.next_below(positions);
      for (std::size_t j = 0; j < d; ++j) {
        book.data[m * d + j] = h_dlast.data[p * d + j] + 0.05f * rng.next_gaussian();
      }
    }
  };
  seed_book(ae.params.at("codebook_top"), h_top_dlast);

  QuantizeResult q_top = quantize_nearest(h_top_dlast, ae.codebook_top());
  TensorF cond = upsample_nearest(to_channels_first(q_top.quantized), ae.image_shape[1] / ae.top_grid);
  TensorF stacked = concat_channels(batch, cond);
  TensorF h_bottom = forward_traced(ae.enc_bottom, enc_bottom_params, stacked, unused);
  seed_book(ae.params.at("codebook_bottom"), to_channels_last(h_bottom));
  ae.codebooks_seeded = true;
  ae.top_unused_steps.assign(ae.codebook_size, 0);
  ae.bottom_unused_steps.assign(ae.codebook_size, 0);
}

// A code that loses every assignment stops receiving gradients; after a
// stretch of inactivity it is restarted onto a live encoder output.
constexpr std::uint32_t kRestartAfterSteps = 25;

void restart_dead_codes(TensorF& book, std::vector<std::uint32_t>& unused, const IndexGrid& assignments,
                        const TensorF& h_dlast, std::size_t d, Rng& rng) {
  std::vector<bool> used(book.shape[0], false);
  for (std::uint32_t m : assignments.indices) used[m] = true;
  std::size_t positions = h_dlast.size() / d;
  for (std::size_t m = 0; m < book.shape[0]; ++m) {
    if (used[m]) {
      unused[m] = 0;
      continue;
    }
    if (++unused[m] < kRestartAfterSteps) continue;
    std::size_t p = rng.next_below(positions);
    for (std::size_t j = 0; j < d; ++j) {
      book.data[m * d + j] = h_dlast.data[p * d + j] + 0.01f * rng.next_gaussian();
    }
    unused[m] = 0;
  }
}

}  // namespace

GeneratorLoss generator_loss_and_step(QuantizedAutoencoder& ae, const TensorF& batch, OptimizerState& opt,
                                      float commitment_weight) {
  if (!ae.codebooks_seeded) seed_codebooks_from_batch(ae, batch);
  ParamSet enc_top_params, enc_bottom_params, dec_params;
  ForwardState st = ae_forward(ae, batch, enc_top_params, enc_bottom_params, dec_params);
  std::size_t n = batch.shape[0];

  GeneratorLoss loss;
  double inv_img = 1.0 / static_cast<double>(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    double r = static_cast<double>(st.reconstruction.data[j]) - static_cast<double>(batch.data[j]);
    loss.reconstruction += r * r * inv_img;
  }
  double inv_top = 1.0 / static_cast<double>(st.h_top_dlast.size());
  double inv_bottom = 1.0 / static_cast<double>(st.h_bottom_dlast.size());
  for (std::size_t j = 0; j < st.h_top_dlast.size(); ++j) {
    double r = static_cast<double>(st.h_top_dlast.data[j]) - static_cast<double>(st.q_top.quantized.data[j]);
    loss.codebook += r * r * inv_top;
    loss.commitment += r * r * inv_top;
  }
  for (std::size_t j = 0; j < st.h_bottom_dlast.size(); ++j) {
    double r = static_cast<double>(st.h_bottom_dlast.data[j]) - static_cast<double>(st.q_bottom.quantized.data[j]);
    loss.codebook += r * r * inv_bottom;
    loss.commitment += r * r * inv_bottom;
  }
  loss.total = loss.reconstruction + loss.codebook + commitment_weight * loss.commitment;
  if (!std::isfinite(loss.total)) throw std::runtime_error("generator step: non-finite loss");

  // reconstruction gradient through the decoder
  TensorF d_recon = TensorF::zeros({n, st.reconstruction.size() / n});
  for (std::size_t j = 0; j < batch.size(); ++j) {
    d_recon.data[j] = static_cast<float>(
        2.0 * (static_cast<double>(st.reconstruction.data[j]) - static_cast<double>(batch.data[j])) * inv_img);
  }
  ParamSet dec_grads = dec_params.zeros_like();
  TensorF dz;
  graph_backward(ae.dec, dec_params, st.dec_trace, d_recon, &dec_grads, &dz);

  std::size_t d = ae.embed_dim;
  auto [dq_top, dq_bottom] =
      split_flat(dz, {n, ae.top_grid, ae.top_grid, d}, {n, ae.bottom_grid, ae.bottom_grid, d});

  // straight-through to the bottom encoder, plus its commitment pull
  TensorF dh_bottom = dq_bottom;
  for (std::size_t j = 0; j < dh_bottom.size(); ++j) {
    dh_bottom.data[j] += static_cast<float>(
        2.0 * commitment_weight *
        (static_cast<double>(st.h_bottom_dlast.data[j]) - static_cast<double>(st.q_bottom.quantized.data[j])) *
        inv_bottom);
  }
  ParamSet enc_bottom_grads = enc_bottom_params.zeros_like();
  TensorF d_stacked;
  graph_backward(ae.enc_bottom, enc_bottom_params, st.bottom_trace, to_channels_first(dh_bottom), &enc_bottom_grads,
                 &d_stacked);

  // gradient reaching the top codes through the bottom encoder's conditioning
  // channels, folded back through the nearest upsample
  TensorF d_cond = slice_channels(d_stacked, ae.image_shape[0], d);
  TensorF d_cond_coarse = downsample_sum(d_cond, ae.image_shape[1] / ae.top_grid);
  TensorF dq_top_total = dq_top;
  {
    TensorF extra = to_channels_last(d_cond_coarse);
    for (std::size_t j = 0; j < dq_top_total.size(); ++j) dq_top_total.data[j] += extra.data[j];
  }
  TensorF dh_top = dq_top_total;
  for (std::size_t j = 0; j < dh_top.size(); ++j) {
    dh_top.data[j] += static_cast<float>(
        2.0 * commitment_weight *
        (static_cast<double>(st.h_top_dlast.data[j]) - static_cast<double>(st.q_top.quantized.data[j])) * inv_top);
  }
  ParamSet enc_top_grads = enc_top_params.zeros_like();
  graph_backward(ae.enc_top, enc_top_params, st.top_trace, to_channels_first(dh_top), &enc_top_grads, nullptr);

  // codebook gradients from the codebook loss term
  ParamSet grads = ae.params.zeros_like();
  add_prefixed(grads, "enc_top.", enc_top_grads);
  add_prefixed(grads, "enc_bottom.", enc_bottom_grads);
  add_prefixed(grads, "dec.", dec_grads);
  {
    auto& cb_top_grad = grads.at("codebook_top").data;
    auto& cb_bottom_grad = grads.at("codebook_bottom").data;
    for (std::size_t p = 0; p < st.q_top.indices.size(); ++p) {
      std::size_t m = st.q_top.indices.indices[p];
      for (std::size_t j = 0; j < d; ++j) {
        double pull = 2.0 * (static_cast<double>(st.q_top.quantized.data[p * d + j]) -
                             static_cast<double>(st.h_top_dlast.data[p * d + j])) *
                      inv_top;
        cb_top_grad[m * d + j] += static_cast<float>(pull);
      }
    }
    for (std::size_t p = 0; p < st.q_bottom.indices.size(); ++p) {
      std::size_t m = st.q_bottom.indices.indices[p];
      for (std::size_t j = 0; j < d; ++j) {
        double pull = 2.0 * (static_cast<double>(st.q_bottom.quantized.data[p * d + j]) -
                             static_cast<double>(st.h_bottom_dlast.data[p * d + j])) *
                      inv_bottom;
        cb_bottom_grad[m * d + j] += static_cast<float>(pull);
      }
    }
  }

  optimizer_step(opt, ae.params, grads);

  ++ae.train_steps;
  Rng restart_rng(seed_mix(ae.seed, 0xdeadc0deULL, ae.train_steps));
  restart_dead_codes(ae.params.at("codebook_top"), ae.top_unused_steps, st.q_top.indices, st.h_top_dlast,
                     ae.embed_dim, restart_rng);
  restart_dead_codes(ae.params.at("codebook_bottom"), ae.bottom_unused_steps, st.q_bottom.indices,
                     st.h_bottom_dlast, ae.embed_dim, restart_rng);
  return loss;
}

}  // namespace hfsim
