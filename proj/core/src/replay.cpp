#include "hfsim/replay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "hfsim/engine.hpp"
#include "hfsim/rng.hpp"
#include "hfsim/serialize.hpp"

namespace hfsim {

namespace {

std::string inst_name(std::size_t id) { return "Inst" + std::to_string(id + 1); }

// Slice the {N, g, g} batch grids emitted by encode_images into per-sample
// {g, g} record grids.
IndexGrid slice_grid(const IndexGrid& batch_grid, std::size_t sample) {
  IndexGrid out;
  out.dims.assign(batch_grid.dims.begin() + 1, batch_grid.dims.end());
  std::size_t per = 1;
  for (std::size_t d : out.dims) per *= d;
  out.indices.assign(batch_grid.indices.begin() + static_cast<std::ptrdiff_t>(sample * per),
                     batch_grid.indices.begin() + static_cast<std::ptrdiff_t>((sample + 1) * per));
  return out;
}

IndexGrid stack_grids(const std::vector<const IndexGrid*>& grids) {
  IndexGrid out;
  out.dims.push_back(grids.size());
  for (std::size_t d : grids[0]->dims) out.dims.push_back(d);
  for (const IndexGrid* g : grids) {
    out.indices.insert(out.indices.end(), g->indices.begin(), g->indices.end());
  }
  return out;
}

TensorF concat_batches(const TensorF& a, const TensorF& b) {
  if (a.size() == 0) return b;
  std::vector<std::size_t> shape = a.shape;
  shape[0] += b.shape[0];
  TensorF out = TensorF::zeros(shape);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

std::size_t replay_batch_size(const StrategyConfig& cfg, std::size_t real_batch) {
  auto n = static_cast<std::size_t>(std::llround(cfg.replay.replay_ratio * static_cast<double>(real_batch)));
  return n;
}

std::vector<std::size_t> shuffled_epoch(const std::vector<std::size_t>& indices, std::uint64_t seed) {
  std::vector<std::size_t> order = indices;
  std::sort(order.begin(), order.end());
  Rng rng(seed);
  rng.shuffle(order);
  return order;
}

}  // namespace

std::pair<TensorF, TensorF> synthesize_replay(const ReplayBuffer& buffer,
                                              const std::vector<std::size_t>& record_indices) {
  if (record_indices.empty() || buffer.empty()) {
    return {TensorF{}, TensorF{}};
  }
  if (!buffer.has_decoder) throw std::invalid_argument("synthesize_replay: buffer has no decoder snapshot");
  std::vector<const IndexGrid*> tops, bottoms;
  TensorF labels = TensorF::zeros({record_indices.size()});
  for (std::size_t i = 0; i < record_indices.size(); ++i) {
    std::size_t idx = record_indices[i];
    if (idx >= buffer.size()) throw std::out_of_range("synthesize_replay: record index out of range");
    const LatentRecord& rec = buffer.records[idx];
    if (rec.kind != LatentRecord::Kind::Discrete) {
      throw std::invalid_argument("synthesize_replay: continuous records cannot be decoded");
    }
    tops.push_back(&rec.top);
    bottoms.push_back(&rec.bottom);
    labels.data[i] = rec.label;
  }
  TensorF images = decode_codes(buffer.decoder, stack_grids(tops), stack_grids(bottoms));
  return {std::move(images), std::move(labels)};
}

namespace {

// Refresh the buffer after institution k: decode everything stored through
// d_old, append the institution's real samples, re-encode with the updated
// encoders.
void refresh_buffer(ReplayBuffer& buffer, const DecoderSnapshot& d_old, const QuantizedAutoencoder& ae,
                    const InstitutionNode& node, const LabeledDataset& ds) {
  std::vector<TensorF> images;
  std::vector<float> labels;
  std::vector<std::size_t> origins;

  constexpr std::size_t chunk = 64;
  if (!buffer.empty()) {
    ReplayBuffer staged = buffer;
    staged.decoder = d_old;
    staged.has_decoder = true;
    for (std::size_t first = 0; first < buffer.size(); first += chunk) {
      std::size_t count = std::min(chunk, buffer.size() - first);
      std::vector<std::size_t> sel(count);
      std::iota(sel.begin(), sel.end(), first);
      auto [imgs, labs] = synthesize_replay(staged, sel);
      images.push_back(std::move(imgs));
      for (std::size_t i = 0; i < count; ++i) {
        labels.push_back(labs.data[i]);
        origins.push_back(buffer.records[first + i].origin_institution);
      }
    }
  }
  for (std::size_t first = 0; first < node.indices.size(); first += chunk) {
    std::size_t count = std::min(chunk, node.indices.size() - first);
    std::vector<std::size_t> sel(node.indices.begin() + static_cast<std::ptrdiff_t>(first),
                                 node.indices.begin() + static_cast<std::ptrdiff_t>(first + count));
    auto [imgs, targets] = ds.gather(sel);
    images.push_back(std::move(imgs));
    for (std::size_t i = 0; i < count; ++i) {
      labels.push_back(targets.data[i]);
      origins.push_back(node.id);
    }
  }

  std::vector<LatentRecord> refreshed;
  std::size_t cursor = 0;
  for (const TensorF& batch : images) {
    EncodeResult enc = encode_images(ae, batch);
    for (std::size_t i = 0; i < batch.shape[0]; ++i, ++cursor) {
      LatentRecord rec;
      rec.kind = LatentRecord::Kind::Discrete;
      rec.label = labels[cursor];
      rec.origin_institution = origins[cursor];
      rec.top = slice_grid(enc.top, i);
      rec.bottom = slice_grid(enc.bottom, i);
      refreshed.push_back(std::move(rec));
    }
  }
  buffer.records = std::move(refreshed);
}

}  // namespace

ReplayBuffer train_generator_serial(std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                                    QuantizedAutoencoder& ae, const StrategyConfig& cfg, TrainingLog& log) {
  if (nodes.empty()) throw std::invalid_argument("train_generator_serial: no institutions");
  const ReplayParams& rp = cfg.replay;
  OptimizerState opt = OptimizerState::adaptive(rp.generator_lr, rp.generator_decay);

  ReplayBuffer buffer;
  std::size_t generator_epoch = 0;
  for (std::size_t pass = 0; pass < std::max<std::size_t>(1, rp.generator_passes); ++pass) {
    for (auto& node : nodes) {
      if (node.indices.empty()) {
        throw std::invalid_argument("train_generator_serial: " + inst_name(node.id) + " has no data");
      }
      DecoderSnapshot d_old = snapshot_decoder(ae);
      ReplayBuffer frozen = buffer;
      frozen.decoder = d_old;
      frozen.has_decoder = true;

      std::size_t batch_size = std::min(cfg.batch_size, node.indices.size());
      double loss_sum = 0.0;
      std::size_t steps = 0;
      for (std::size_t epoch = 0; epoch < rp.generator_epochs; ++epoch, ++generator_epoch) {
        opt.epoch = generator_epoch;
        auto order = shuffled_epoch(node.indices, seed_mix(node.seed, 0x93e1ULL, pass, epoch));
        std::size_t batches = order.size() / batch_size;
        for (std::size_t b = 0; b < batches; ++b) {
          std::vector<std::size_t> sel(order.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                                       order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
          auto [real, real_labels] = ds.gather(sel);
          TensorF union_batch = real;
          std::size_t nr = replay_batch_size(cfg, batch_size);
          if (!frozen.empty() && nr > 0) {
            Rng pick(seed_mix(node.seed, 0x93e2ULL, pass, epoch * 1000 + b));
            std::vector<std::size_t> replay_sel(nr);
            for (auto& r : replay_sel) r = pick.next_below(frozen.size());
            auto [replayed, replay_labels] = synthesize_replay(frozen, replay_sel);
            union_batch = concat_batches(replayed, real);
          }
          GeneratorLoss gl;
          try {
            gl = generator_loss_and_step(ae, union_batch, opt, rp.commitment_weight);
          } catch (const std::exception& e) {
            throw std::runtime_error(std::string(e.what()) + " (generator training at " + inst_name(node.id) + ")");
          }
          loss_sum += gl.total;
          ++steps;
        }
      }
      LogRecord rec;
      rec.round = pass;
      rec.institution = inst_name(node.id);
      rec.phase = "generator_visit";
      rec.loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
      rec.seed = node.seed;
      log.append(rec);

      refresh_buffer(buffer, d_old, ae, node, ds);
    }
  }
  buffer.decoder = snapshot_decoder(ae);
  buffer.has_decoder = true;
  return buffer;
}

ParamSet train_classifier_with_replay(std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                                      const ModelGraph& model, const ParamSet& initial, const ReplayBuffer& buffer,
                                      const StrategyConfig& cfg, TrainingLog& log,
                                      std::vector<ParamSet>* checkpoints) {
  if (nodes.empty()) throw std::invalid_argument("train_classifier_with_replay: no institutions");
  if (!buffer.empty() && !buffer.has_decoder) {
    throw std::invalid_argument("train_classifier_with_replay: buffer has records but no decoder");
  }

  // one-time distribution of the decoder and latent set to every institution
  if (!buffer.empty()) {
    bool float_labels = ds.task_kind == TaskKind::Regression;
    std::vector<std::uint8_t> latents = latent_records_to_bytes(buffer.records, float_labels);
    std::vector<std::uint8_t> decoder_bytes = params_to_bytes(buffer.decoder.dec_params);
    for (const auto& node : nodes) {
      Message m = make_blob_message(MessageKind::Latents, 0, latents, "server", inst_name(node.id));
      LogRecord rec;
      rec.round = 0;
      rec.institution = inst_name(node.id);
      rec.phase = "replay_distribution";
      rec.bytes_sent = m.total_bytes() + decoder_bytes.size();
      rec.seed = node.seed;
      log.append(rec);
    }
  }

  ParamSet weights = initial;
  std::string carrier = "server";
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    auto round32 = static_cast<std::uint32_t>(round);
    for (auto& node : nodes) {
      if (node.indices.empty()) {
        throw std::invalid_argument("train_classifier_with_replay: " + inst_name(node.id) + " has no data");
      }
      Message hop = make_param_message(MessageKind::Weights, round32, weights, carrier, inst_name(node.id));
      LogRecord hoplog;
      hoplog.round = round;
      hoplog.institution = inst_name(node.id);
      hoplog.phase = "cwt_transfer";
      hoplog.bytes_sent = hop.total_bytes();
      hoplog.seed = node.seed;
      log.append(hoplog);
      node.params = params_from_message(hop);
      node.opt.learning_rate = cfg.learning_rate;
      node.opt.decay = cfg.lr_decay;
      node.opt.epoch = round;

      std::size_t batch_size = std::min(cfg.batch_size, node.indices.size());
      std::size_t per_epoch = node.indices.size() / batch_size;
      double loss_sum = 0.0;
      std::size_t steps = 0;
      for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        auto order = shuffled_epoch(node.indices, seed_mix(node.seed, round, epoch));
        for (std::size_t b = 0; b < per_epoch; ++b) {
          std::vector<std::size_t> sel(order.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                                       order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
          auto [real, real_targets] = ds.gather(sel);
          TensorF batch = real;
          TensorF targets = real_targets;
          std::size_t nr = replay_batch_size(cfg, batch_size);
          if (!buffer.empty() && nr > 0) {
            Rng pick(seed_mix(node.seed, 0xc1a51ULL, round, epoch * 1000 + b));
            std::vector<std::size_t> replay_sel(nr);
            for (auto& r : replay_sel) r = pick.next_below(buffer.size());
            auto [replayed, replay_labels] = synthesize_replay(buffer, replay_sel);
            batch = concat_batches(replayed, real);
            targets = TensorF::zeros({nr + real_targets.size()});
            std::copy(replay_labels.data.begin(), replay_labels.data.end(), targets.data.begin());
            std::copy(real_targets.data.begin(), real_targets.data.end(),
                      targets.data.begin() + static_cast<std::ptrdiff_t>(nr));
            if (ds.task_kind == TaskKind::Regression) {
              targets = TensorF({nr + real_targets.size(), 1}, std::move(targets.data));
            }
          }
          LossGrad lg = loss_and_grad(model, node.params, batch, targets);
          optimizer_step(node.opt, node.params, lg.grads);
          loss_sum += lg.loss;
          ++steps;
        }
      }
      LogRecord visit;
      visit.round = round;
      visit.institution = inst_name(node.id);
      visit.phase = buffer.empty() ? "cwt_visit" : "cwt_replay_visit";
      visit.loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
      visit.seed = node.seed;
      log.append(visit);
      weights = node.params;
      carrier = inst_name(node.id);
      if (checkpoints) checkpoints->push_back(weights);
    }
  }
  return weights;
}

ExtractResult fedreplay_client_extract(const InstitutionNode& node, const LabeledDataset& ds,
                                       const ModelGraph& encoder, const ParamSet& encoder_params) {
  if (node.indices.empty()) throw std::invalid_argument("fedreplay_client_extract: institution has no data");
  ExtractResult result;
  constexpr std::size_t chunk = 64;
  for (std::size_t first = 0; first < node.indices.size(); first += chunk) {
    std::size_t count = std::min(chunk, node.indices.size() - first);
    std::vector<std::size_t> sel(node.indices.begin() + static_cast<std::ptrdiff_t>(first),
                                 node.indices.begin() + static_cast<std::ptrdiff_t>(first + count));
    auto [batch, targets] = ds.gather(sel);
    TensorF features = encoder.layers.empty() ? batch : forward(encoder, encoder_params, batch);
    std::size_t per = features.size() / count;
    std::vector<std::size_t> sample_shape(features.shape.begin() + 1, features.shape.end());
    for (std::size_t i = 0; i < count; ++i) {
      LatentRecord rec;
      rec.kind = LatentRecord::Kind::Continuous;
      rec.label = targets.data[i];
      rec.origin_institution = node.id;
      rec.feature_map = TensorF(sample_shape,
                                std::vector<float>(features.data.begin() + static_cast<std::ptrdiff_t>(i * per),
                                                   features.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per)));
      result.records.push_back(std::move(rec));
    }
  }
  bool float_labels = ds.task_kind == TaskKind::Regression;
  result.message = make_blob_message(MessageKind::Latents, 0, latent_records_to_bytes(result.records, float_labels),
                                     inst_name(node.id), "server");
  return result;
}

ParamSet fedreplay_server_train(const std::vector<std::vector<LatentRecord>>& per_institution_records,
                                const ModelGraph& tail, const StrategyConfig& cfg, std::uint64_t server_seed,
                                TrainingLog& log) {
  std::vector<const LatentRecord*> all;
  for (const auto& records : per_institution_records) {
    for (const auto& rec : records) all.push_back(&rec);
  }
  if (all.empty()) throw std::invalid_argument("fedreplay_server_train: empty latent union");

  // canonical order: (label, payload bytes) with origin excluded, so the
  // result depends only on the union multiset
  std::vector<std::pair<std::vector<std::uint8_t>, const LatentRecord*>> keyed;
  keyed.reserve(all.size());
  for (const LatentRecord* rec : all) keyed.emplace_back(canonical_record_bytes(*rec), rec);
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.second->label != b.second->label) return a.second->label < b.second->label;
    return a.first < b.first;
  });
  std::vector<std::size_t> order(keyed.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed_mix(server_seed, 0xfed5ULL));
  rng.shuffle(order);

  ParamSet params = init_params(tail, seed_mix(server_seed, 0xfed6ULL));
  OptimizerState opt = OptimizerState::sgd(cfg.replay.server_lr, cfg.lr_decay);
  std::size_t batch_size = std::min(cfg.batch_size, keyed.size());
  std::size_t batches = keyed.size() / batch_size;
  const auto& shape = keyed[0].second->feature_map.shape;
  bool regression = tail.output_kind == OutputKind::ScalarRegression;

  for (std::size_t epoch = 0; epoch < cfg.replay.server_epochs; ++epoch) {
    opt.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      TensorF batch = TensorF::zeros({batch_size, shape[0], shape[1], shape[2]});
      TensorF targets = regression ? TensorF::zeros({batch_size, 1}) : TensorF::zeros({batch_size});
      std::size_t per = batch.size() / batch_size;
      for (std::size_t i = 0; i < batch_size; ++i) {
        const LatentRecord* rec = keyed[order[b * batch_size + i]].second;
        if (rec->kind != LatentRecord::Kind::Continuous) {
          throw std::invalid_argument("fedreplay_server_train: expected continuous feature-map records");
        }
        std::copy(rec->feature_map.data.begin(), rec->feature_map.data.end(),
                  batch.data.begin() + static_cast<std::ptrdiff_t>(i * per));
        targets.data[i] = rec->label;
      }
      LossGrad lg = loss_and_grad(tail, params, batch, targets);
      optimizer_step(opt, params, lg.grads);
      loss_sum += lg.loss;
    }
    LogRecord rec;
    rec.round = epoch;
    rec.institution = "server";
    rec.phase = "fedreplay_server_epoch";
    rec.loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.seed = server_seed;
    log.append(rec);
  }
  return params;
}

EncoderTrainResult train_encoder_at_institution(InstitutionNode& node, const LabeledDataset& ds,
                                                const ModelGraph& full_model, std::size_t cut_index,
                                                const StrategyConfig& cfg) {
  if (node.indices.empty()) throw std::invalid_argument("train_encoder_at_institution: institution has no data");
  ParamSet params = init_params(full_model, seed_mix(node.seed, 0xe4c0ULL));
  OptimizerState opt = OptimizerState::sgd(cfg.learning_rate, cfg.lr_decay);
  std::size_t batch_size = std::min(cfg.batch_size, node.indices.size());
  std::size_t per_epoch = node.indices.size() / batch_size;
  for (std::size_t epoch = 0; epoch < cfg.replay.encoder_epochs; ++epoch) {
    opt.epoch = epoch;
    auto order = shuffled_epoch(node.indices, seed_mix(node.seed, 0xe4c1ULL, epoch));
    for (std::size_t b = 0; b < per_epoch; ++b) {
      std::vector<std::size_t> sel(order.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                                   order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
      auto [batch, targets] = ds.gather(sel);
      LossGrad lg = loss_and_grad(full_model, params, batch, targets);
      optimizer_step(opt, params, lg.grads);
    }
  }
  EncoderTrainResult result;
  CutSplit split = split_at_cut_layer(full_model, cut_index);
  auto [head_params, tail_params] = split_params(full_model, params, cut_index);
  result.head = std::move(split.head);
  result.head_params = std::move(head_params);
  result.full_params = std::move(params);
  return result;
}

// --- latent record serialization ------------------------------------------

namespace {

void append_grid(std::vector<std::uint8_t>& out, const IndexGrid& grid) {
  out.push_back(static_cast<std::uint8_t>(grid.dims.size()));
  for (std::size_t d : grid.dims) append_u32(out, static_cast<std::uint32_t>(d));
  for (std::uint32_t idx : grid.indices) append_u16(out, static_cast<std::uint16_t>(idx));
}

IndexGrid read_grid(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
  IndexGrid grid;
  std::uint8_t rank = read_u8(bytes, offset);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint32_t d = read_u32(bytes, offset);
    grid.dims.push_back(d);
    count *= d;
  }
  for (std::size_t i = 0; i < count; ++i) grid.indices.push_back(read_u16(bytes, offset));
  return grid;
}

void append_record_body(std::vector<std::uint8_t>& out, const LatentRecord& rec, bool float_labels) {
  if (float_labels) {
    append_f32(out, rec.label);
  } else {
    append_u32(out, static_cast<std::uint32_t>(rec.label));
  }
  out.push_back(static_cast<std::uint8_t>(rec.kind));
  if (rec.kind == LatentRecord::Kind::Discrete) {
    append_grid(out, rec.top);
    append_grid(out, rec.bottom);
  } else {
    out.push_back(static_cast<std::uint8_t>(rec.feature_map.rank()));
    for (std::size_t d : rec.feature_map.shape) append_u32(out, static_cast<std::uint32_t>(d));
    for (float v : rec.feature_map.data) append_f32(out, v);
  }
}

}  // namespace

std::vector<std::uint8_t> canonical_record_bytes(const LatentRecord& record) {
  std::vector<std::uint8_t> out;
  append_record_body(out, record, true);
  return out;
}

std::vector<std::uint8_t> latent_records_to_bytes(const std::vector<LatentRecord>& records, bool float_labels) {
  std::vector<std::uint8_t> out;
  out.push_back('H');
  out.push_back('F');
  out.push_back('L');
  out.push_back('T');
  append_u16(out, 1);
  out.push_back(float_labels ? 1 : 0);
  append_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) append_record_body(out, rec, float_labels);
  return out;
}

std::vector<LatentRecord> latent_records_from_bytes(const std::vector<std::uint8_t>& bytes,
                                                    std::size_t origin_institution) {
  if (bytes.size() < 4 || bytes[0] != 'H' || bytes[1] != 'F' || bytes[2] != 'L' || bytes[3] != 'T') {
    throw std::runtime_error("latent file: bad magic at offset 0");
  }
  std::size_t offset = 4;
  std::uint16_t version = read_u16(bytes, offset);
  if (version != 1) throw std::runtime_error("latent file: unsupported version " + std::to_string(version));
  bool float_labels = read_u8(bytes, offset) != 0;
  std::uint32_t count = read_u32(bytes, offset);
  std::vector<LatentRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    LatentRecord rec;
    rec.origin_institution = origin_institution;
    rec.label = float_labels ? read_f32(bytes, offset) : static_cast<float>(read_u32(bytes, offset));
    std::uint8_t kind = read_u8(bytes, offset);
    if (kind > 1) throw std::runtime_error("latent file: unknown record kind " + std::to_string(kind));
    rec.kind = static_cast<LatentRecord::Kind>(kind);
    if (rec.kind == LatentRecord::Kind::Discrete) {
      rec.top = read_grid(bytes, offset);
      rec.bottom = read_grid(bytes, offset);
    } else {
      std::uint8_t rank = read_u8(bytes, offset);
      std::vector<std::size_t> shape;
      for (std::size_t j = 0; j < rank; ++j) shape.push_back(read_u32(bytes, offset));
      std::size_t n = shape_product(shape);
      std::vector<float> data(n);
      for (std::size_t j = 0; j < n; ++j) data[j] = read_f32(bytes, offset);
      rec.feature_map = TensorF(std::move(shape), std::move(data));
    }
    records.push_back(std::move(rec));
  }
  if (offset != bytes.size()) throw std::runtime_error("latent file: trailing bytes at offset " + std::to_string(offset));
  return records;
}

void save_latent_records(const std::vector<LatentRecord>& records, bool float_labels, const std::string& path) {
  auto bytes = latent_records_to_bytes(records, float_labels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_latent_records: cannot open '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("save_latent_records: write failed for '" + path + "'");
}

std::vector<LatentRecord> load_latent_records(const std::string& path, std::size_t origin_institution) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_latent_records: cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return latent_records_from_bytes(bytes, origin_institution);
}

}  // namespace hfsim
