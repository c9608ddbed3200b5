#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include "hfsim/autoencoder.hpp"
#include "hfsim/codebook.hpp"
#include "hfsim/engine.hpp"
#include "hfsim/metrics.hpp"
#include "hfsim/replay.hpp"
#include "hfsim/rng.hpp"

using namespace hfsim;

namespace {

LabeledDataset toy_dataset(std::size_t per_class, std::uint64_t seed, std::size_t image_size = 16) {
  SyntheticSpec spec;
  spec.task_kind = TaskKind::Classification;
  spec.num_classes = 2;
  spec.image_size = image_size;
  spec.samples_per_class = per_class;
  spec.noise_sigma = 0.05f;
  return make_synthetic_dataset(spec, seed);
}

ModelGraph toy_classifier(std::size_t image_size = 16, std::size_t classes = 2) {
  ModelGraph model;
  std::size_t half = image_size / 2;
  model.layers = {LayerSpec::conv2d(1, 4, 3, 1, 1), LayerSpec::relu(), LayerSpec::max_pool(2, 2),
                  LayerSpec::flatten(), LayerSpec::dense(4 * half * half, 16), LayerSpec::relu(),
                  LayerSpec::dense(16, classes)};
  return model;
}

StrategyConfig replay_config() {
  StrategyConfig cfg;
  cfg.kind = StrategyKind::CwtReplay;
  cfg.rounds = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.05f;
  cfg.lr_decay = {};
  cfg.replay.generator_epochs = 40;
  cfg.replay.generator_lr = 5e-3f;
  cfg.replay.generator_decay = {};
  cfg.replay.codebook_size = 16;
  cfg.replay.embed_dim = 4;
  cfg.replay.replay_ratio = 1.0;
  return cfg;
}

// Four distinct pattern images; quantization erases per-sample noise, so a
// memorization oracle needs samples that differ structurally.
LabeledDataset four_distinct_images(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.task_kind = TaskKind::Classification;
  spec.num_classes = 4;
  spec.samples_per_class = 1;
  spec.image_size = 16;
  spec.noise_sigma = 0.05f;
  return make_synthetic_dataset(spec, seed);
}

// Overfit oracle: a generator hammered onto a tiny dataset until it
// memorizes it; downstream tests lean on this memorization.
QuantizedAutoencoder overfit_generator(const TensorF& images, std::size_t steps, std::uint64_t seed,
                                       double* final_mse = nullptr) {
  QuantizedAutoencoder ae = make_autoencoder({images.shape[1], images.shape[2], images.shape[3]}, 16, 4, seed);
  OptimizerState opt = OptimizerState::adaptive(5e-3f, DecaySchedule{150, 2.0f});
  for (std::size_t i = 0; i < steps; ++i) {
    opt.epoch = i;
    generator_loss_and_step(ae, images, opt, 0.25f);
  }
  if (final_mse) *final_mse = reconstruction_mse(ae, images);
  return ae;
}

}  // namespace

TEST_CASE("quantizer picks the nearest code with low-index tie break") {
  Codebook cb;
  cb.vectors = TensorF({2, 2}, {0.0f, 0.0f, 1.0f, 1.0f});

  SUBCASE("nearest by L2") {
    TensorF h({1, 2}, {0.2f, 0.1f});
    QuantizeResult q = quantize_nearest(h, cb);
    CHECK(q.indices.indices[0] == 0);
    CHECK(q.quantized.data[0] == 0.0f);
    CHECK(q.quantized.data[1] == 0.0f);
  }
  SUBCASE("exact codebook vector is a fixed point") {
    TensorF h({1, 2}, {1.0f, 1.0f});
    QuantizeResult q = quantize_nearest(h, cb);
    CHECK(q.indices.indices[0] == 1);
    CHECK(q.quantized.data == h.data);
  }
  SUBCASE("equidistant input goes to the lowest index") {
    TensorF h({1, 2}, {0.5f, 0.5f});
    QuantizeResult q = quantize_nearest(h, cb);
    CHECK(q.indices.indices[0] == 0);
  }
  SUBCASE("dim mismatch is an error") {
    TensorF h({1, 3}, {0.0f, 0.0f, 0.0f});
    CHECK_THROWS(quantize_nearest(h, cb));
  }
}

TEST_CASE("quantizer is idempotent and emits codebook rows") {
  Codebook cb = Codebook::random(8, 4, 3);
  TensorF h = TensorF::zeros({2, 3, 3, 4});
  Rng rng(4);
  for (float& v : h.data) v = rng.next_uniform(-1.0f, 1.0f);
  QuantizeResult q1 = quantize_nearest(h, cb);
  QuantizeResult q2 = quantize_nearest(q1.quantized, cb);
  CHECK(q1.indices == q2.indices);
  CHECK(q1.quantized == q2.quantized);
  for (std::size_t p = 0; p < q1.indices.size(); ++p) {
    std::uint32_t m = q1.indices.indices[p];
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(q1.quantized.data[p * 4 + j] == cb.vectors.data[m * 4 + j]);
    }
  }
}

TEST_CASE("codebook lookup inverts the index grids") {
  Codebook cb = Codebook::random(8, 4, 5);
  TensorF h = TensorF::zeros({1, 2, 2, 4});
  Rng rng(6);
  for (float& v : h.data) v = rng.next_uniform(-1.0f, 1.0f);
  QuantizeResult q = quantize_nearest(h, cb);
  TensorF back = codebook_lookup(q.indices, cb);
  CHECK(back == q.quantized);
}

TEST_CASE("generator loss is strictly positive at random init") {
  LabeledDataset ds = toy_dataset(4, 7);
  QuantizedAutoencoder ae = make_autoencoder({1, 16, 16}, 16, 4, 7);
  OptimizerState opt = OptimizerState::adaptive(1e-3f);
  std::vector<std::size_t> sel{0, 1, 2, 3};
  auto [batch, targets] = ds.gather(sel);
  GeneratorLoss loss = generator_loss_and_step(ae, batch, opt, 0.25f);
  CHECK(loss.total > 0.0);
  CHECK(loss.reconstruction > 0.0);
}

TEST_CASE("500 steps on 4 images drives reconstruction MSE below 1e-3") {
  LabeledDataset ds = four_distinct_images(8);
  std::vector<std::size_t> sel{0, 1, 2, 3};
  auto [batch, targets] = ds.gather(sel);
  double mse = 1.0;
  overfit_generator(batch, 500, 8, &mse);
  CHECK(mse < 1e-3);
}

TEST_CASE("records from a converged generator decode back to their sources") {
  LabeledDataset ds = four_distinct_images(9);
  std::vector<std::size_t> sel{0, 1, 2, 3};
  auto [batch, targets] = ds.gather(sel);
  QuantizedAutoencoder ae = overfit_generator(batch, 500, 9);

  ReplayBuffer buffer;
  buffer.decoder = snapshot_decoder(ae);
  buffer.has_decoder = true;
  EncodeResult enc = encode_images(ae, batch);
  for (std::size_t i = 0; i < 4; ++i) {
    LatentRecord rec;
    rec.kind = LatentRecord::Kind::Discrete;
    rec.label = targets.data[i];
    rec.top.dims = {enc.top.dims[1], enc.top.dims[2]};
    rec.bottom.dims = {enc.bottom.dims[1], enc.bottom.dims[2]};
    std::size_t pt = enc.top.size() / 4, pb = enc.bottom.size() / 4;
    rec.top.indices.assign(enc.top.indices.begin() + i * pt, enc.top.indices.begin() + (i + 1) * pt);
    rec.bottom.indices.assign(enc.bottom.indices.begin() + i * pb, enc.bottom.indices.begin() + (i + 1) * pb);
    buffer.records.push_back(std::move(rec));
  }

  auto [decoded, labels] = synthesize_replay(buffer, {0, 1, 2, 3});
  REQUIRE(decoded.shape == batch.shape);
  double mse = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    double r = double(decoded.data[j]) - double(batch.data[j]);
    mse += r * r;
  }
  mse /= double(batch.size());
  CHECK(mse < 1e-3);
  CHECK(labels.data == targets.data);
}

TEST_CASE("empty buffer synthesizes an empty batch") {
  ReplayBuffer buffer;
  auto [images, labels] = synthesize_replay(buffer, {});
  CHECK(images.size() == 0);
  CHECK(labels.size() == 0);
}

TEST_CASE("serial generator training accumulates records from every institution") {
  LabeledDataset ds = toy_dataset(8, 10);
  PartitionPlan plan = partition_iid(ds, 2, 10);
  auto nodes = make_nodes(plan, 10, OptimizerState::sgd(0.05f));
  QuantizedAutoencoder ae = make_autoencoder({1, 16, 16}, 16, 4, 10);
  StrategyConfig cfg = replay_config();
  cfg.replay.generator_epochs = 10;
  TrainingLog log;
  ReplayBuffer buffer = train_generator_serial(nodes, ds, ae, cfg, log);
  CHECK(buffer.size() == ds.size());
  bool seen0 = false, seen1 = false;
  for (const auto& rec : buffer.records) {
    if (rec.origin_institution == 0) seen0 = true;
    if (rec.origin_institution == 1) seen1 = true;
  }
  CHECK(seen0);
  CHECK(seen1);
  CHECK(buffer.has_decoder);
}

TEST_CASE("serial pass memorizes institution-1 content well enough to replay at the end") {
  // overfit setup: 2 institutions, 4 tiny images each, heavy epochs
  LabeledDataset ds = toy_dataset(4, 11);
  SkewSpec skew;
  skew.proportions = {{1.0, 0.0}, {0.0, 1.0}};
  skew.sizes = {4, 4};
  PartitionPlan plan = partition_by_proportions(ds, skew, 11);
  auto nodes = make_nodes(plan, 11, OptimizerState::sgd(0.05f));
  QuantizedAutoencoder ae = make_autoencoder({1, 16, 16}, 16, 4, 11);
  StrategyConfig cfg = replay_config();
  cfg.batch_size = 4;
  cfg.replay.generator_epochs = 150;
  TrainingLog log;
  ReplayBuffer buffer = train_generator_serial(nodes, ds, ae, cfg, log);

  // decode the records that originated at institution 0 and compare to its data
  std::vector<std::size_t> inst0_records;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if (buffer.records[i].origin_institution == 0) inst0_records.push_back(i);
  }
  REQUIRE(!inst0_records.empty());
  auto [decoded, labels] = synthesize_replay(buffer, inst0_records);
  // nearest source image error
  double worst = 0.0;
  std::size_t per = 16 * 16;
  for (std::size_t i = 0; i < inst0_records.size(); ++i) {
    double best = 1e300;
    for (std::size_t s : plan.assignments[0]) {
      double mse = 0.0;
      for (std::size_t j = 0; j < per; ++j) {
        double r = double(decoded.data[i * per + j]) - double(ds.images.data[s * per + j]);
        mse += r * r;
      }
      best = std::min(best, mse / double(per));
    }
    worst = std::max(worst, best);
  }
  CHECK(worst < 1e-2);
}

TEST_CASE("union batches have replay plus real size and empty buffer degenerates to plain cwt") {
  LabeledDataset ds = toy_dataset(16, 12);
  PartitionPlan plan = partition_iid(ds, 2, 12);
  ModelGraph model = toy_classifier();
  ParamSet initial = init_params(model, 12);
  StrategyConfig cfg = replay_config();
  cfg.rounds = 2;
  cfg.batch_size = 8;

  // empty buffer path vs run_cwt_cycle
  ReplayBuffer empty;
  auto nodes_a = make_nodes(plan, 12, OptimizerState::sgd(cfg.learning_rate));
  TrainingLog log_a;
  ParamSet degenerate = train_classifier_with_replay(nodes_a, ds, model, initial, empty, cfg, log_a);

  StrategyConfig cwt_cfg = cfg;
  cwt_cfg.kind = StrategyKind::Cwt;
  CentralServer server;
  server.cfg = cwt_cfg;
  server.global = initial;
  auto nodes_b = make_nodes(plan, 12, OptimizerState::sgd(cfg.learning_rate));
  TrainingLog log_b;
  for (std::size_t r = 0; r < cfg.rounds; ++r) run_cwt_cycle(server, nodes_b, ds, model, log_b);
  CHECK(param_distance(degenerate, server.global) == 0.0f);
}

TEST_CASE("fedreplay extraction emits one record per sample and one message") {
  LabeledDataset ds = toy_dataset(16, 13);
  PartitionPlan plan = partition_iid(ds, 2, 13);
  auto nodes = make_nodes(plan, 13, OptimizerState::sgd(0.05f));
  ModelGraph model = toy_classifier();
  ParamSet params = init_params(model, 13);
  CutSplit split = split_at_cut_layer(model, 3);
  auto [head_params, tail_params] = split_params(model, params, 3);

  ExtractResult result = fedreplay_client_extract(nodes[0], ds, split.head, head_params);
  CHECK(result.records.size() == nodes[0].indices.size());
  CHECK(result.message.kind == MessageKind::Latents);
  for (const auto& rec : result.records) {
    CHECK(rec.kind == LatentRecord::Kind::Continuous);
    CHECK(rec.origin_institution == 0);
  }

  // identity encoder: latents equal raw inputs
  ModelGraph identity;
  identity.loss_kind = model.loss_kind;
  identity.output_kind = model.output_kind;
  ExtractResult raw = fedreplay_client_extract(nodes[0], ds, identity, ParamSet{});
  TensorF first = ds.sample(nodes[0].indices[0]);
  CHECK(raw.records[0].feature_map.data == std::vector<float>(first.data.begin(), first.data.end()));

  // deterministic re-extraction
  ExtractResult again = fedreplay_client_extract(nodes[0], ds, split.head, head_params);
  CHECK(again.records == result.records);
  CHECK(again.message.payload == result.message.payload);
}

TEST_CASE("fedreplay server training is invariant to partitioning") {
  LabeledDataset ds = toy_dataset(16, 14);
  ModelGraph model = toy_classifier();
  ParamSet params = init_params(model, 14);
  std::size_t cut = 3;
  CutSplit split = split_at_cut_layer(model, cut);
  auto [head_params, tail_params] = split_params(model, params, cut);

  StrategyConfig cfg = replay_config();
  cfg.kind = StrategyKind::FedReplay;
  cfg.replay.server_epochs = 4;

  auto run_with_plan = [&](const PartitionPlan& plan) {
    auto nodes = make_nodes(plan, 14, OptimizerState::sgd(cfg.learning_rate));
    std::vector<std::vector<LatentRecord>> per_inst;
    for (const auto& node : nodes) {
      per_inst.push_back(fedreplay_client_extract(node, ds, split.head, head_params).records);
    }
    TrainingLog log;
    return fedreplay_server_train(per_inst, split.tail, cfg, 14, log);
  };

  PartitionPlan iid = partition_iid(ds, 2, 1);
  SkewSpec skew;
  skew.proportions = {{0.75, 0.25}, {0.25, 0.75}};
  skew.sizes = {16, 16};
  PartitionPlan skewed = partition_by_proportions(ds, skew, 2);

  ParamSet a = run_with_plan(iid);
  ParamSet b = run_with_plan(skewed);
  CHECK(a == b);  // bit-identical
}

TEST_CASE("fedreplay server training with one institution equals centralized tail training") {
  LabeledDataset ds = toy_dataset(16, 15);
  ModelGraph model = toy_classifier();
  ParamSet params = init_params(model, 15);
  std::size_t cut = 3;
  CutSplit split = split_at_cut_layer(model, cut);
  auto [head_params, tail_params] = split_params(model, params, cut);

  StrategyConfig cfg = replay_config();
  cfg.kind = StrategyKind::FedReplay;
  cfg.replay.server_epochs = 4;

  PartitionPlan one = partition_iid(ds, 1, 3);
  auto nodes = make_nodes(one, 15, OptimizerState::sgd(cfg.learning_rate));
  std::vector<std::vector<LatentRecord>> per_inst{fedreplay_client_extract(nodes[0], ds, split.head, head_params).records};
  TrainingLog log;
  ParamSet served = fedreplay_server_train(per_inst, split.tail, cfg, 15, log);
  CHECK(served.size() > 0);
  CHECK_THROWS(fedreplay_server_train({}, split.tail, cfg, 15, log));
}

TEST_CASE("latent records round-trip through the HFLT format") {
  LabeledDataset ds = toy_dataset(4, 16);
  PartitionPlan plan = partition_iid(ds, 1, 16);
  auto nodes = make_nodes(plan, 16, OptimizerState::sgd(0.05f));
  ModelGraph model = toy_classifier();
  ParamSet params = init_params(model, 16);
  CutSplit split = split_at_cut_layer(model, 1);
  auto [head_params, tail_params] = split_params(model, params, 1);
  ExtractResult result = fedreplay_client_extract(nodes[0], ds, split.head, head_params);

  auto bytes = latent_records_to_bytes(result.records, false);
  auto back = latent_records_from_bytes(bytes, 0);
  CHECK(back == result.records);

  std::string path = (std::filesystem::temp_directory_path() / "hfsim_latents_test.bin").string();
  save_latent_records(result.records, false, path);
  auto loaded = load_latent_records(path, 0);
  CHECK(loaded == result.records);
  std::remove(path.c_str());

  // corrupt magic
  bytes[0] = 'X';
  CHECK_THROWS(latent_records_from_bytes(bytes, 0));
}

TEST_CASE("discrete latent records also round-trip") {
  std::vector<LatentRecord> records(2);
  records[0].kind = LatentRecord::Kind::Discrete;
  records[0].label = 1.0f;
  records[0].top = IndexGrid{{2, 2}, {0, 1, 2, 3}};
  records[0].bottom = IndexGrid{{4, 4}, std::vector<std::uint32_t>(16, 5)};
  records[1] = records[0];
  records[1].label = 0.0f;
  auto bytes = latent_records_to_bytes(records, false);
  auto back = latent_records_from_bytes(bytes, 3);
  CHECK(back[0].top == records[0].top);
  CHECK(back[0].bottom == records[0].bottom);
  CHECK(back[1].label == 0.0f);
  CHECK(back[0].origin_institution == 3);
}

TEST_CASE("encoder training at an institution splits consistently and is deterministic") {
  LabeledDataset ds = toy_dataset(16, 17);
  PartitionPlan plan = partition_iid(ds, 2, 17);
  auto nodes = make_nodes(plan, 17, OptimizerState::sgd(0.05f));
  ModelGraph model = toy_classifier();
  StrategyConfig cfg = replay_config();
  cfg.kind = StrategyKind::FedReplay;
  cfg.replay.encoder_epochs = 2;

  EncoderTrainResult a = train_encoder_at_institution(nodes[0], ds, model, 3, cfg);
  EncoderTrainResult b = train_encoder_at_institution(nodes[0], ds, model, 3, cfg);
  CHECK(a.head_params == b.head_params);

  // head composes with tail to reproduce the full trained model exactly
  auto [head_params, tail_params] = split_params(model, a.full_params, 3);
  CHECK(head_params == a.head_params);
  CutSplit split = split_at_cut_layer(model, 3);
  TensorF x = ds.sample(0);
  TensorF full = forward(model, a.full_params, x);
  TensorF composed = forward(split.tail, tail_params, forward(split.head, a.head_params, x));
  CHECK(full == composed);
}
