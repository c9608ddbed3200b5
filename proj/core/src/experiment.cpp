#include "hfsim/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hfsim/engine.hpp"
#include "hfsim/rng.hpp"
#include "hfsim/serialize.hpp"

namespace hfsim {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

DatasetConfig parse_dataset(const json& j) {
  reject_unknown_keys(j, {"task", "num_classes", "image_size", "channels", "train_samples", "test_samples",
                          "noise_sigma", "shared_cell_fraction"},
                      "dataset");
  DatasetConfig cfg;
  if (j.contains("task")) {
    std::string task = j.at("task").get<std::string>();
    if (task == "classification") {
      cfg.task = TaskKind::Classification;
    } else if (task == "regression") {
      cfg.task = TaskKind::Regression;
    } else {
      throw std::invalid_argument("config: dataset.task must be classification or regression");
    }
  }
  if (j.contains("num_classes")) cfg.num_classes = j.at("num_classes").get<std::size_t>();
  if (j.contains("image_size")) cfg.image_size = j.at("image_size").get<std::size_t>();
  if (j.contains("channels")) cfg.channels = j.at("channels").get<std::size_t>();
  if (j.contains("train_samples")) cfg.train_samples = j.at("train_samples").get<std::size_t>();
  if (j.contains("test_samples")) cfg.test_samples = j.at("test_samples").get<std::size_t>();
  if (j.contains("noise_sigma")) cfg.noise_sigma = j.at("noise_sigma").get<float>();
  if (j.contains("shared_cell_fraction")) cfg.shared_cell_fraction = j.at("shared_cell_fraction").get<float>();
  return cfg;
}

PartitionConfig parse_partition(const json& j) {
  reject_unknown_keys(j, {"preset", "institutions", "proportions", "sizes"}, "partition");
  PartitionConfig cfg;
  if (j.contains("preset")) cfg.preset = j.at("preset").get<std::string>();
  if (j.contains("institutions")) cfg.institutions = j.at("institutions").get<std::size_t>();
  if (j.contains("proportions")) cfg.proportions = j.at("proportions").get<std::vector<std::vector<double>>>();
  if (j.contains("sizes")) cfg.sizes = j.at("sizes").get<std::vector<std::size_t>>();
  return cfg;
}

ModelConfig parse_model(const json& j) {
  reject_unknown_keys(j, {"conv_channels", "kernel", "dense_hidden"}, "model");
  ModelConfig cfg;
  if (j.contains("conv_channels")) cfg.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
  if (j.contains("kernel")) cfg.kernel = j.at("kernel").get<std::size_t>();
  if (j.contains("dense_hidden")) cfg.dense_hidden = j.at("dense_hidden").get<std::vector<std::size_t>>();
  return cfg;
}

ReplayParams parse_replay(const json& j) {
  reject_unknown_keys(j, {"generator_epochs", "generator_lr", "generator_decay_interval", "generator_decay_scale",
                          "commitment_weight", "codebook_size", "embed_dim", "replay_ratio", "server_epochs",
                          "server_lr", "encoder_epochs", "generator_passes"},
                      "strategy.replay");
  ReplayParams rp;
  if (j.contains("generator_epochs")) rp.generator_epochs = j.at("generator_epochs").get<std::size_t>();
  if (j.contains("generator_lr")) rp.generator_lr = j.at("generator_lr").get<float>();
  if (j.contains("generator_decay_interval"))
    rp.generator_decay.interval_epochs = j.at("generator_decay_interval").get<std::size_t>();
  if (j.contains("generator_decay_scale")) rp.generator_decay.scale = j.at("generator_decay_scale").get<float>();
  if (j.contains("commitment_weight")) rp.commitment_weight = j.at("commitment_weight").get<float>();
  if (j.contains("codebook_size")) rp.codebook_size = j.at("codebook_size").get<std::size_t>();
  if (j.contains("embed_dim")) rp.embed_dim = j.at("embed_dim").get<std::size_t>();
  if (j.contains("replay_ratio")) rp.replay_ratio = j.at("replay_ratio").get<double>();
  if (j.contains("server_epochs")) rp.server_epochs = j.at("server_epochs").get<std::size_t>();
  if (j.contains("server_lr")) rp.server_lr = j.at("server_lr").get<float>();
  if (j.contains("encoder_epochs")) rp.encoder_epochs = j.at("encoder_epochs").get<std::size_t>();
  if (j.contains("generator_passes")) rp.generator_passes = j.at("generator_passes").get<std::size_t>();
  return rp;
}

StrategyConfig parse_strategy(const json& j) {
  reject_unknown_keys(j, {"kind", "rounds", "batch_size", "participation", "learning_rate", "lr_decay_interval",
                          "lr_decay_scale", "momentum", "mu", "server_momentum", "share_fraction", "cut_index",
                          "local_epochs", "replay"},
                      "strategy");
  StrategyConfig cfg;
  if (j.contains("kind")) cfg.kind = strategy_from_name(j.at("kind").get<std::string>());
  if (j.contains("rounds")) cfg.rounds = j.at("rounds").get<std::size_t>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("participation")) cfg.participation = j.at("participation").get<double>();
  if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<float>();
  if (j.contains("lr_decay_interval")) cfg.lr_decay.interval_epochs = j.at("lr_decay_interval").get<std::size_t>();
  if (j.contains("lr_decay_scale")) cfg.lr_decay.scale = j.at("lr_decay_scale").get<float>();
  if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<float>();
  if (j.contains("mu")) cfg.mu = j.at("mu").get<float>();
  if (j.contains("server_momentum")) cfg.server_momentum = j.at("server_momentum").get<float>();
  if (j.contains("share_fraction")) cfg.share_fraction = j.at("share_fraction").get<double>();
  if (j.contains("cut_index")) cfg.cut_index = j.at("cut_index").get<std::size_t>();
  if (j.contains("local_epochs")) cfg.local_epochs = j.at("local_epochs").get<std::size_t>();
  if (j.contains("replay")) cfg.replay = parse_replay(j.at("replay"));
  return cfg;
}

AttackSection parse_attack(const json& j) {
  reject_unknown_keys(j, {"kind", "alpha", "max_iters", "learning_rate", "init", "count", "encoder_cut",
                          "stall_iters"},
                      "attack");
  AttackSection section;
  if (j.contains("kind")) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "gradient") {
      section.kind = AttackKind::Gradient;
    } else if (kind == "model") {
      section.kind = AttackKind::Model;
    } else {
      throw std::invalid_argument("config: attack.kind must be gradient or model");
    }
  }
  if (j.contains("alpha")) section.config.alpha = j.at("alpha").get<double>();
  if (j.contains("max_iters")) section.config.max_iters = j.at("max_iters").get<std::size_t>();
  if (j.contains("learning_rate")) section.config.learning_rate = j.at("learning_rate").get<float>();
  if (j.contains("stall_iters")) section.config.stall_iters = j.at("stall_iters").get<std::size_t>();
  if (j.contains("init")) {
    std::string init = j.at("init").get<std::string>();
    if (init == "zeros") {
      section.config.init = AttackInit::Zeros;
    } else if (init == "gray") {
      section.config.init = AttackInit::Gray;
    } else if (init == "uniform_noise") {
      section.config.init = AttackInit::UniformNoise;
    } else {
      throw std::invalid_argument("config: attack.init must be zeros, gray or uniform_noise");
    }
  }
  if (j.contains("count")) section.count = j.at("count").get<std::size_t>();
  if (j.contains("encoder_cut")) section.encoder_cut = j.at("encoder_cut").get<std::size_t>();
  return section;
}

std::string attack_init_name(AttackInit init) {
  switch (init) {
    case AttackInit::Zeros: return "zeros";
    case AttackInit::Gray: return "gray";
    case AttackInit::UniformNoise: return "uniform_noise";
  }
  return "?";
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.task == TaskKind::Classification) {
    if (dataset.num_classes < 2) throw std::invalid_argument("config: num_classes must be >= 2");
    if (dataset.train_samples % dataset.num_classes != 0 || dataset.test_samples % dataset.num_classes != 0) {
      throw std::invalid_argument("config: train/test sample counts must divide evenly across classes");
    }
  }
  if (dataset.train_samples == 0 || dataset.test_samples == 0) {
    throw std::invalid_argument("config: train_samples and test_samples must be positive");
  }
  if (dataset.image_size < 4) throw std::invalid_argument("config: image_size must be >= 4");
  if (partition.institutions == 0) throw std::invalid_argument("config: institutions must be >= 1");
  if (!partition.preset.empty() && partition.preset != "split1" && partition.preset != "split2" &&
      partition.preset != "split3") {
    throw std::invalid_argument("config: partition.preset must be split1, split2 or split3");
  }
  if (partition.preset.empty() && partition.proportions.empty() && partition.institutions == 0) {
    throw std::invalid_argument("config: partition needs a preset, explicit proportions, or institutions");
  }
  if (model.conv_channels.empty() && model.dense_hidden.empty()) {
    throw std::invalid_argument("config: model needs at least one layer");
  }
  if (runs == 0) throw std::invalid_argument("config: runs must be >= 1");
  strategy.validate();
  if (attack) attack->config.validate();
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
  }
  reject_unknown_keys(j, {"dataset", "partition", "model", "strategy", "attack", "compare", "seed", "runs", "out"},
                      "top level");
  ExperimentConfig cfg;
  if (j.contains("dataset")) cfg.dataset = parse_dataset(j.at("dataset"));
  if (j.contains("partition")) cfg.partition = parse_partition(j.at("partition"));
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("strategy")) cfg.strategy = parse_strategy(j.at("strategy"));
  if (j.contains("attack")) cfg.attack = parse_attack(j.at("attack"));
  if (j.contains("compare")) {
    for (const auto& name : j.at("compare").get<std::vector<std::string>>()) {
      cfg.compare.push_back(strategy_from_name(name));
    }
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("runs")) cfg.runs = j.at("runs").get<std::size_t>();
  if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"] = {{"task", cfg.dataset.task == TaskKind::Classification ? "classification" : "regression"},
                  {"num_classes", cfg.dataset.num_classes},
                  {"image_size", cfg.dataset.image_size},
                  {"channels", cfg.dataset.channels},
                  {"train_samples", cfg.dataset.train_samples},
                  {"test_samples", cfg.dataset.test_samples},
                  {"noise_sigma", cfg.dataset.noise_sigma},
                  {"shared_cell_fraction", cfg.dataset.shared_cell_fraction}};
  j["partition"] = {{"institutions", cfg.partition.institutions}};
  if (!cfg.partition.preset.empty()) j["partition"]["preset"] = cfg.partition.preset;
  if (!cfg.partition.proportions.empty()) {
    j["partition"]["proportions"] = cfg.partition.proportions;
    j["partition"]["sizes"] = cfg.partition.sizes;
  }
  j["model"] = {{"conv_channels", cfg.model.conv_channels},
                {"kernel", cfg.model.kernel},
                {"dense_hidden", cfg.model.dense_hidden}};
  j["strategy"] = {{"kind", strategy_name(cfg.strategy.kind)},
                   {"rounds", cfg.strategy.rounds},
                   {"batch_size", cfg.strategy.batch_size},
                   {"learning_rate", cfg.strategy.learning_rate},
                   {"lr_decay_interval", cfg.strategy.lr_decay.interval_epochs},
                   {"lr_decay_scale", cfg.strategy.lr_decay.scale},
                   {"momentum", cfg.strategy.momentum},
                   {"mu", cfg.strategy.mu},
                   {"server_momentum", cfg.strategy.server_momentum},
                   {"share_fraction", cfg.strategy.share_fraction},
                   {"cut_index", cfg.strategy.cut_index},
                   {"local_epochs", cfg.strategy.local_epochs},
                   {"replay",
                    {{"generator_epochs", cfg.strategy.replay.generator_epochs},
                     {"generator_lr", cfg.strategy.replay.generator_lr},
                     {"generator_decay_interval", cfg.strategy.replay.generator_decay.interval_epochs},
                     {"generator_decay_scale", cfg.strategy.replay.generator_decay.scale},
                     {"commitment_weight", cfg.strategy.replay.commitment_weight},
                     {"codebook_size", cfg.strategy.replay.codebook_size},
                     {"embed_dim", cfg.strategy.replay.embed_dim},
                     {"replay_ratio", cfg.strategy.replay.replay_ratio},
                     {"server_epochs", cfg.strategy.replay.server_epochs},
                     {"server_lr", cfg.strategy.replay.server_lr},
                     {"encoder_epochs", cfg.strategy.replay.encoder_epochs},
                     {"generator_passes", cfg.strategy.replay.generator_passes}}}};
  if (cfg.attack) {
    j["attack"] = {{"kind", cfg.attack->kind == AttackKind::Gradient ? "gradient" : "model"},
                   {"alpha", cfg.attack->config.alpha},
                   {"max_iters", cfg.attack->config.max_iters},
                   {"learning_rate", cfg.attack->config.learning_rate},
                   {"init", attack_init_name(cfg.attack->config.init)},
                   {"stall_iters", cfg.attack->config.stall_iters},
                   {"count", cfg.attack->count},
                   {"encoder_cut", cfg.attack->encoder_cut}};
  }
  if (!cfg.compare.empty()) {
    std::vector<std::string> names;
    for (StrategyKind kind : cfg.compare) names.push_back(strategy_name(kind));
    j["compare"] = names;
  }
  j["seed"] = cfg.seed;
  j["runs"] = cfg.runs;
  if (!cfg.out.empty()) j["out"] = cfg.out;
  return j.dump(2) + "\n";
}

ModelGraph build_model(const ModelConfig& model, const DatasetConfig& dataset) {
  ModelGraph graph;
  std::size_t channels = dataset.channels;
  std::size_t side = dataset.image_size;
  for (std::size_t out_ch : model.conv_channels) {
    graph.layers.push_back(LayerSpec::conv2d(channels, out_ch, model.kernel, 1, model.kernel / 2));
    graph.layers.push_back(LayerSpec::relu());
    if (side >= 4) {
      graph.layers.push_back(LayerSpec::max_pool(2, 2));
      side /= 2;
    }
    channels = out_ch;
  }
  graph.layers.push_back(LayerSpec::flatten());
  std::size_t features = channels * side * side;
  for (std::size_t hidden : model.dense_hidden) {
    graph.layers.push_back(LayerSpec::dense(features, hidden));
    graph.layers.push_back(LayerSpec::relu());
    features = hidden;
  }
  if (dataset.task == TaskKind::Classification) {
    graph.layers.push_back(LayerSpec::dense(features, dataset.num_classes));
    graph.loss_kind = LossKind::CrossEntropy;
    graph.output_kind = OutputKind::ClassLogits;
  } else {
    graph.layers.push_back(LayerSpec::dense(features, 1));
    graph.loss_kind = LossKind::Mae;
    graph.output_kind = OutputKind::ScalarRegression;
  }
  return graph;
}

DatasetBundle build_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.task_kind = cfg.task;
  spec.num_classes = cfg.num_classes;
  spec.image_size = cfg.image_size;
  spec.channels = cfg.channels;
  spec.noise_sigma = cfg.noise_sigma;
  spec.shared_cell_fraction = cfg.shared_cell_fraction;
  std::size_t total = cfg.train_samples + cfg.test_samples;
  if (cfg.task == TaskKind::Classification) {
    spec.samples_per_class = total / cfg.num_classes;
  } else {
    spec.total_samples = total;
  }
  LabeledDataset all = make_synthetic_dataset(spec, seed);
  DatasetBundle bundle;
  bundle.train = slice_dataset(all, 0, cfg.train_samples);
  bundle.test = slice_dataset(all, cfg.train_samples, cfg.test_samples);
  return bundle;
}

namespace {

SkewSpec preset_skew(const std::string& preset, const LabeledDataset& train, std::size_t institutions) {
  if (institutions != 4) {
    throw std::invalid_argument("partition preset tables are defined for 4 institutions");
  }
  SkewSpec skew;
  std::size_t per = train.size() / institutions;
  if (train.task_kind == TaskKind::Regression) {
    per = per * 8 / 10;  // quantile-band populations fluctuate; leave slack
  }
  skew.sizes.assign(institutions, per);
  if (train.task_kind == TaskKind::Classification) {
    if (train.num_classes != 2) {
      throw std::invalid_argument("classification presets are defined for 2 classes");
    }
    if (preset == "split2") {
      skew.proportions = {{0.8, 0.2}, {0.8, 0.2}, {0.2, 0.8}, {0.2, 0.8}};
    } else {  // split3
      skew.proportions = {{0.95, 0.05}, {0.95, 0.05}, {0.05, 0.95}, {0.05, 0.95}};
    }
  } else {
    if (preset == "split2") {
      skew.proportions = {{0.7, 0.1, 0.1, 0.1}, {0.1, 0.7, 0.1, 0.1}, {0.1, 0.1, 0.7, 0.1}, {0.1, 0.1, 0.1, 0.7}};
    } else {  // split3: near-disjoint quantile bands
      skew.proportions = {{0.97, 0.01, 0.01, 0.01},
                          {0.01, 0.97, 0.01, 0.01},
                          {0.01, 0.01, 0.97, 0.01},
                          {0.01, 0.01, 0.01, 0.97}};
    }
  }
  return skew;
}

}  // namespace

PartitionPlan build_partition(const LabeledDataset& train, const PartitionConfig& cfg, std::uint64_t seed) {
  if (!cfg.proportions.empty()) {
    SkewSpec skew;
    skew.proportions = cfg.proportions;
    skew.sizes = cfg.sizes;
    if (skew.sizes.empty()) skew.sizes.assign(cfg.proportions.size(), train.size() / cfg.proportions.size());
    return partition_by_proportions(train, skew, seed);
  }
  if (cfg.preset == "split1" || cfg.preset.empty()) {
    return partition_iid(train, cfg.institutions, seed);
  }
  return partition_by_proportions(train, preset_skew(cfg.preset, train, cfg.institutions), seed);
}

StrategyOutcome execute_strategy(const ExperimentConfig& cfg, StrategyKind kind, const DatasetBundle& data,
                                 const PartitionPlan& plan, std::uint64_t run_seed) {
  StrategyConfig strategy = cfg.strategy;
  strategy.kind = kind;
  strategy.validate();

  StrategyOutcome outcome;
  outcome.model = build_model(cfg.model, cfg.dataset);

  PartitionPlan training_plan = plan;
  if (kind == StrategyKind::FedAvgShare) {
    training_plan = apply_global_share(data.train, plan, strategy.share_fraction, cfg.seed);
  }

  OptimizerState opt_template =
      strategy.momentum > 0.0f
          ? OptimizerState::sgd_momentum(strategy.learning_rate, strategy.momentum, strategy.lr_decay)
          : OptimizerState::sgd(strategy.learning_rate, strategy.lr_decay);
  auto nodes = make_nodes(training_plan, run_seed, opt_template);

  switch (kind) {
    case StrategyKind::FedAvg:
    case StrategyKind::FedSgd:
    case StrategyKind::FedAvgM:
    case StrategyKind::FedProx:
    case StrategyKind::FedAvgShare: {
      CentralServer server;
      server.cfg = strategy;
      server.global = init_params(outcome.model, run_seed);
      for (std::size_t round = 0; round < strategy.rounds; ++round) {
        run_parallel_round(server, nodes, data.train, outcome.model, outcome.log);
      }
      outcome.final_params = server.global;
      break;
    }
    case StrategyKind::Cwt: {
      CentralServer server;
      server.cfg = strategy;
      server.global = init_params(outcome.model, run_seed);
      std::vector<ParamSet> checkpoints;
      for (std::size_t round = 0; round < strategy.rounds; ++round) {
        run_cwt_cycle(server, nodes, data.train, outcome.model, outcome.log,
                      round + 1 == strategy.rounds ? &checkpoints : nullptr);
      }
      outcome.final_params = server.global;
      outcome.cycle_checkpoints = std::move(checkpoints);
      break;
    }
    case StrategyKind::SplitNn: {
      CentralServer server;
      server.cfg = strategy;
      server.global = init_params(outcome.model, run_seed);
      for (std::size_t round = 0; round < strategy.rounds; ++round) {
        run_splitnn_cycle(server, nodes, data.train, outcome.model, outcome.log);
      }
      outcome.final_params = server.global;
      break;
    }
    case StrategyKind::CwtReplay: {
      QuantizedAutoencoder ae =
          make_autoencoder({cfg.dataset.channels, cfg.dataset.image_size, cfg.dataset.image_size},
                           strategy.replay.codebook_size, strategy.replay.embed_dim, seed_mix(run_seed, 0x93ULL));
      ReplayBuffer buffer = train_generator_serial(nodes, data.train, ae, strategy, outcome.log);
      ParamSet initial = init_params(outcome.model, run_seed);
      std::vector<ParamSet> checkpoints;
      outcome.final_params = train_classifier_with_replay(nodes, data.train, outcome.model, initial, buffer, strategy,
                                                          outcome.log, &checkpoints);
      if (checkpoints.size() >= nodes.size()) {
        // keep the final cycle's visit checkpoints for the forgetting matrix
        outcome.cycle_checkpoints.assign(checkpoints.end() - static_cast<std::ptrdiff_t>(nodes.size()),
                                         checkpoints.end());
      }
      break;
    }
    case StrategyKind::FedReplay: {
      // the auxiliary encoder trains on one arbitrary institution (the first)
      EncoderTrainResult encoder =
          train_encoder_at_institution(nodes[0], data.train, outcome.model, strategy.cut_index, strategy);
      std::vector<std::vector<LatentRecord>> per_inst;
      for (const auto& node : nodes) {
        ExtractResult extract = fedreplay_client_extract(node, data.train, encoder.head, encoder.head_params);
        LogRecord rec;
        rec.round = 0;
        rec.institution = "Inst" + std::to_string(node.id + 1);
        rec.phase = "latent_upload";
        rec.bytes_sent = extract.message.total_bytes();
        rec.seed = node.seed;
        outcome.log.append(rec);
        per_inst.push_back(std::move(extract.records));
      }
      CutSplit split = split_at_cut_layer(outcome.model, strategy.cut_index);
      ParamSet tail_params = fedreplay_server_train(per_inst, split.tail, strategy, run_seed, outcome.log);
      outcome.final_params = merge_split_params(outcome.model, encoder.head_params, tail_params, strategy.cut_index);
      break;
    }
  }

  outcome.test_metric = evaluate(outcome.model, outcome.final_params, data.test);
  return outcome;
}

StrategyOutcome execute_centralized(const ExperimentConfig& cfg, const DatasetBundle& data, std::uint64_t run_seed) {
  StrategyOutcome outcome;
  outcome.model = build_model(cfg.model, cfg.dataset);
  StrategyConfig strategy = cfg.strategy;
  strategy.kind = StrategyKind::FedAvg;  // schedule fields only
  outcome.final_params = run_centralized(data.train, outcome.model, strategy, run_seed, outcome.log);
  outcome.test_metric = evaluate(outcome.model, outcome.final_params, data.test);
  return outcome;
}

void RunDirectory::write_text(const std::string& name, const std::string& content) {
  std::filesystem::path full = std::filesystem::path(path) / name;
  std::filesystem::create_directories(full.parent_path());
  std::ofstream out(full, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("run directory: cannot write '" + full.string() + "'");
  out << content;
  files.push_back(name);
}

void RunDirectory::write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  std::filesystem::path full = std::filesystem::path(path) / name;
  std::filesystem::create_directories(full.parent_path());
  std::ofstream out(full, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("run directory: cannot write '" + full.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  files.push_back(name);
}

void RunDirectory::finalize_manifest() {
  std::ostringstream manifest;
  for (const std::string& name : files) {
    std::filesystem::path full = std::filesystem::path(path) / name;
    manifest << name << ' ' << std::filesystem::file_size(full) << ' ' << fnv1a64_file(full.string()) << "\n";
  }
  std::ofstream out(std::filesystem::path(path) / "manifest.txt", std::ios::trunc);
  if (!out) throw std::runtime_error("run directory: cannot write manifest");
  out << manifest.str();
}

namespace {

std::string split_label(const ExperimentConfig& cfg) {
  return cfg.partition.preset.empty() ? "custom" : cfg.partition.preset;
}

std::string metric_name(const ExperimentConfig& cfg) {
  return cfg.dataset.task == TaskKind::Classification ? "accuracy" : "mae";
}

std::uint64_t dataset_hash(const LabeledDataset& ds) {
  ParamSet wrap;
  wrap.add("images", ds.images);
  TensorF labels({ds.labels.size()}, ds.labels);
  wrap.add("labels", labels);
  return fnv1a64(params_to_bytes(wrap));
}

}  // namespace

RunDirectory run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.out.empty()) throw std::invalid_argument("run_experiment: output directory not set");
  RunDirectory dir;
  dir.path = cfg.out;
  std::filesystem::create_directories(dir.path);

  try {
    dir.write_text("config.json", experiment_config_to_json(cfg));

    DatasetBundle data = build_dataset(cfg.dataset, cfg.seed);
    PartitionPlan plan = build_partition(data.train, cfg.partition, cfg.seed);
    {
      std::ostringstream plan_text;
      plan_text << "K=" << plan.institutions() << " seed=" << plan.seed << "\n";
      for (const auto& assignment : plan.assignments) {
        for (std::size_t i = 0; i < assignment.size(); ++i) plan_text << (i ? " " : "") << assignment[i];
        plan_text << "\n";
      }
      dir.write_text("plan.txt", plan_text.str());
      std::ostringstream ks;
      ks << "ks_skewness," << ks_skewness(data.train, plan) << "\n";
      dir.write_text("partition_stats.csv", ks.str());
    }

    std::vector<double> metrics;
    for (std::size_t run = 0; run < cfg.runs; ++run) {
      std::uint64_t run_seed = seed_mix(cfg.seed, 0x2115ULL, run);
      StrategyOutcome outcome = execute_strategy(cfg, cfg.strategy.kind, data, plan, run_seed);
      std::string prefix = "run" + std::to_string(run) + "/";
      dir.write_text(prefix + "training_log.csv", outcome.log.to_csv());
      dir.write_bytes(prefix + "model.hfsm", params_to_bytes(outcome.final_params));
      std::ostringstream fm;
      fm << "strategy,split,metric,value,run\n";
      fm << strategy_name(cfg.strategy.kind) << ',' << split_label(cfg) << ',' << metric_name(cfg) << ','
         << outcome.test_metric << ',' << run << "\n";
      dir.write_text(prefix + "final_metrics.csv", fm.str());
      if (!outcome.cycle_checkpoints.empty()) {
        std::vector<LabeledDataset> parts;
        for (const auto& assignment : plan.assignments) {
          LabeledDataset part;
          part.task_kind = data.train.task_kind;
          part.num_classes = data.train.num_classes;
          auto [images, targets] = data.train.gather(assignment);
          part.images = std::move(images);
          for (std::size_t idx : assignment) part.labels.push_back(data.train.labels[idx]);
          parts.push_back(std::move(part));
        }
        ForgettingMatrix matrix = forgetting_matrix(outcome.model, outcome.cycle_checkpoints, parts);
        dir.write_text(prefix + "forgetting.csv", forgetting_matrix_csv(matrix));
      }
      metrics.push_back(outcome.test_metric);
    }

    RunSummary summary = aggregate_runs(metrics);
    std::ostringstream sum;
    sum << "strategy,split,metric,mean,std,runs\n";
    sum << strategy_name(cfg.strategy.kind) << ',' << split_label(cfg) << ',' << metric_name(cfg) << ','
        << summary.mean << ',' << summary.stddev << ',' << summary.runs << "\n";
    dir.write_text("summary.csv", sum.str());
    dir.finalize_manifest();
  } catch (const std::exception& e) {
    std::ofstream err(std::filesystem::path(dir.path) / "error.txt", std::ios::trunc);
    err << e.what() << "\n";
    throw;
  }
  return dir;
}

std::string compare_strategies(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.compare.empty()) throw std::invalid_argument("compare: config has no compare list");

  DatasetBundle data = build_dataset(cfg.dataset, cfg.seed);
  PartitionPlan plan = build_partition(data.train, cfg.partition, cfg.seed);
  std::uint64_t base_hash = dataset_hash(data.train);

  std::ostringstream csv;
  csv << "strategy,split,metric,mean,std,runs\n";

  auto emit = [&](const std::string& name, const std::vector<double>& metrics) {
    RunSummary summary = aggregate_runs(metrics);
    csv << name << ',' << split_label(cfg) << ',' << metric_name(cfg) << ',' << summary.mean << ',' << summary.stddev
        << ',' << summary.runs << "\n";
  };

  // centralized benchmark row first
  {
    std::vector<double> metrics;
    for (std::size_t run = 0; run < cfg.runs; ++run) {
      metrics.push_back(execute_centralized(cfg, data, seed_mix(cfg.seed, 0x2115ULL, run)).test_metric);
    }
    emit("central", metrics);
  }

  for (StrategyKind kind : cfg.compare) {
    // every strategy must see identical data/partition bytes
    DatasetBundle check = build_dataset(cfg.dataset, cfg.seed);
    if (dataset_hash(check.train) != base_hash) {
      throw std::runtime_error("compare: dataset bytes diverged between strategies");
    }
    std::vector<double> metrics;
    for (std::size_t run = 0; run < cfg.runs; ++run) {
      metrics.push_back(execute_strategy(cfg, kind, data, plan, seed_mix(cfg.seed, 0x2115ULL, run)).test_metric);
    }
    emit(strategy_name(kind), metrics);
  }
  return csv.str();
}

}  // namespace hfsim
