#include "hfsim/federation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hfsim/engine.hpp"
#include "hfsim/rng.hpp"

namespace hfsim {

std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::FedAvg: return "fedavg";
    case StrategyKind::FedSgd: return "fedsgd";
    case StrategyKind::FedAvgM: return "fedavgm";
    case StrategyKind::FedProx: return "fedprox";
    case StrategyKind::FedAvgShare: return "fedavg_share";
    case StrategyKind::Cwt: return "cwt";
    case StrategyKind::SplitNn: return "splitnn";
    case StrategyKind::CwtReplay: return "cwt_replay";
    case StrategyKind::FedReplay: return "fedreplay";
  }
  return "?";
}

StrategyKind strategy_from_name(const std::string& name) {
  for (auto kind : {StrategyKind::FedAvg, StrategyKind::FedSgd, StrategyKind::FedAvgM, StrategyKind::FedProx,
                    StrategyKind::FedAvgShare, StrategyKind::Cwt, StrategyKind::SplitNn, StrategyKind::CwtReplay,
                    StrategyKind::FedReplay}) {
    if (strategy_name(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown strategy '" + name + "'");
}

void StrategyConfig::validate() const {
  if (rounds == 0) throw std::invalid_argument("strategy config: rounds must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("strategy config: batch_size must be >= 1");
  if (learning_rate <= 0.0f) throw std::invalid_argument("strategy config: learning_rate must be > 0");
  if (participation != 1.0) {
    throw std::invalid_argument("strategy config: participation fraction must be 1 (all institutions train)");
  }
  if (momentum < 0.0f || momentum >= 1.0f) throw std::invalid_argument("strategy config: momentum must be in [0,1)");
  switch (kind) {
    case StrategyKind::FedProx:
      if (mu < 0.0f) throw std::invalid_argument("strategy config: fedprox mu must be >= 0");
      break;
    case StrategyKind::FedAvgM:
      if (server_momentum < 0.0f || server_momentum >= 1.0f) {
        throw std::invalid_argument("strategy config: fedavgm server_momentum must be in [0,1)");
      }
      break;
    case StrategyKind::FedAvgShare:
      if (share_fraction <= 0.0 || share_fraction >= 1.0) {
        throw std::invalid_argument("strategy config: share_fraction must be in (0,1)");
      }
      break;
    case StrategyKind::SplitNn:
    case StrategyKind::FedReplay:
      // cut_index is validated against the model at run time
      break;
    case StrategyKind::Cwt:
    case StrategyKind::CwtReplay:
      if (local_epochs == 0) throw std::invalid_argument("strategy config: local_epochs must be >= 1");
      break;
    case StrategyKind::FedAvg:
    case StrategyKind::FedSgd:
      break;
  }
  if (kind == StrategyKind::CwtReplay || kind == StrategyKind::FedReplay) {
    if (replay.codebook_size < 2) throw std::invalid_argument("strategy config: codebook_size must be >= 2");
    if (replay.embed_dim == 0) throw std::invalid_argument("strategy config: embed_dim must be >= 1");
    if (replay.replay_ratio < 0.0) throw std::invalid_argument("strategy config: replay_ratio must be >= 0");
    if (replay.generator_lr <= 0.0f) throw std::invalid_argument("strategy config: generator_lr must be > 0");
    if (replay.server_lr <= 0.0f) throw std::invalid_argument("strategy config: server_lr must be > 0");
  }
}

std::vector<InstitutionNode> make_nodes(const PartitionPlan& plan, std::uint64_t experiment_seed,
                                        const OptimizerState& opt_template) {
  std::vector<InstitutionNode> nodes;
  for (std::size_t k = 0; k < plan.institutions(); ++k) {
    InstitutionNode node;
    node.id = k;
    node.indices = plan.assignments[k];
    node.opt = opt_template;
    node.seed = seed_mix(experiment_seed, 0x6e0deULL, k);
    nodes.push_back(std::move(node));
  }
  return nodes;
}

namespace {

std::string inst_name(std::size_t id) { return "Inst" + std::to_string(id + 1); }

// Minibatch index stream: a fresh shuffle of the node's indices per local
// epoch, seeded from (node seed, round, epoch).
class BatchStream {
 public:
  BatchStream(const InstitutionNode& node, std::size_t batch_size, std::size_t round)
      : node_(node), batch_size_(std::min(batch_size, node.indices.size())), round_(round) {}

  std::vector<std::size_t> next() {
    std::size_t per_epoch = node_.indices.size() / batch_size_;
    if (cursor_ >= per_epoch) {
      cursor_ = 0;
      ++epoch_;
    }
    if (cursor_ == 0) {
      order_ = node_.indices;
      std::sort(order_.begin(), order_.end());  // stream depends on the index set, not emission order
      Rng rng(seed_mix(node_.seed, round_, epoch_));
      rng.shuffle(order_);
    }
    std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_ * batch_size_),
                                   order_.begin() + static_cast<std::ptrdiff_t>((cursor_ + 1) * batch_size_));
    ++cursor_;
    return batch;
  }

 private:
  const InstitutionNode& node_;
  std::size_t batch_size_;
  std::size_t round_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

std::size_t iters_per_round(const InstitutionNode& node, std::size_t batch_size) {
  return node.indices.size() / std::min(batch_size, node.indices.size());
}

}  // namespace

LocalTrainResult local_train(InstitutionNode& node, const LabeledDataset& ds, const ModelGraph& model,
                             const ParamSet& global_params, std::size_t iters, std::size_t batch_size,
                             std::size_t round, const std::optional<ProxTerm>& prox) {
  if (node.indices.empty()) throw std::invalid_argument("local_train: institution " + inst_name(node.id) + " has no data");
  if (iters == 0) throw std::invalid_argument("local_train: iters must be >= 1");
  if (prox && prox->mu < 0.0f) throw std::invalid_argument("local_train: proximal mu must be >= 0");
  if (prox && !prox->anchor.compatible_with(global_params)) {
    throw std::invalid_argument("local_train: proximal anchor incompatible with params");
  }

  node.params = global_params;
  node.opt.epoch = round;
  BatchStream stream(node, batch_size, round);
  double loss_sum = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    auto batch_indices = stream.next();
    auto [batch, targets] = ds.gather(batch_indices);
    LossGrad lg = loss_and_grad(model, node.params, batch, targets);
    if (prox && prox->mu != 0.0f) {
      // effective gradient: grad + mu * (theta - anchor)
      for (std::size_t e = 0; e < lg.grads.entries().size(); ++e) {
        auto& g = lg.grads.entries()[e].second.data;
        const auto& p = node.params.entries()[e].second.data;
        const auto& a = prox->anchor.entries()[e].second.data;
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += prox->mu * (p[j] - a[j]);
      }
    }
    optimizer_step(node.opt, node.params, lg.grads);
    loss_sum += lg.loss;
  }

  LocalTrainResult result;
  result.params = node.params;
  result.sample_count = node.indices.size();
  LogRecord record;
  record.round = round;
  record.institution = inst_name(node.id);
  record.phase = "local_train";
  record.loss = loss_sum / static_cast<double>(iters);
  record.seed = node.seed;
  result.log.append(record);
  return result;
}

ParamSet aggregate_weighted_mean(const std::vector<std::pair<ParamSet, std::size_t>>& updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate_weighted_mean: no updates");
  if (updates.size() == 1) return updates[0].first;
  double total = 0.0;
  for (const auto& [params, count] : updates) {
    if (!params.compatible_with(updates[0].first)) {
      throw std::invalid_argument("aggregate_weighted_mean: incompatible update shapes");
    }
    total += static_cast<double>(count);
  }
  if (total == 0.0) throw std::invalid_argument("aggregate_weighted_mean: zero total sample count");
  ParamSet out = updates[0].first.zeros_like();
  for (std::size_t e = 0; e < out.entries().size(); ++e) {
    auto& dst = out.entries()[e].second.data;
    std::vector<double> acc(dst.size(), 0.0);
    for (const auto& [params, count] : updates) {
      double w = static_cast<double>(count) / total;
      const auto& src = params.entries()[e].second.data;
      for (std::size_t j = 0; j < dst.size(); ++j) acc[j] += w * static_cast<double>(src[j]);
    }
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<float>(acc[j]);
  }
  return out;
}

ParamSet server_momentum_update(CentralServer& server, const ParamSet& averaged, float beta) {
  if (beta < 0.0f || beta >= 1.0f) throw std::invalid_argument("server_momentum_update: beta must be in [0,1)");
  if (!server.global.compatible_with(averaged)) {
    throw std::invalid_argument("server_momentum_update: averaged weights incompatible with global");
  }
  if (server.momentum_buf.empty()) server.momentum_buf = server.global.zeros_like();
  ParamSet next = server.global;
  for (std::size_t e = 0; e < next.entries().size(); ++e) {
    auto& w = next.entries()[e].second.data;
    auto& v = server.momentum_buf.entries()[e].second.data;
    const auto& avg = averaged.entries()[e].second.data;
    const auto& w_old = server.global.entries()[e].second.data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      float v_old = v[j];
      v[j] = beta * v_old + (w_old[j] - avg[j]);
      w[j] = avg[j] - beta * v_old;  // == w_old - v_new, exact when beta == 0
    }
  }
  server.global = next;
  return server.global;
}

void run_parallel_round(CentralServer& server, std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                        const ModelGraph& model, TrainingLog& log) {
  const StrategyConfig& cfg = server.cfg;
  cfg.validate();
  switch (cfg.kind) {
    case StrategyKind::FedAvg:
    case StrategyKind::FedSgd:
    case StrategyKind::FedAvgM:
    case StrategyKind::FedProx:
    case StrategyKind::FedAvgShare:
      break;
    default:
      throw std::invalid_argument("run_parallel_round: strategy " + strategy_name(cfg.kind) + " is not parallel");
  }
  std::size_t round = server.round;
  auto round32 = static_cast<std::uint32_t>(round);

  std::vector<std::pair<ParamSet, std::size_t>> updates;
  for (auto& node : nodes) {
    Message broadcast = make_param_message(MessageKind::Weights, round32, server.global, "server",
                                           inst_name(node.id));
    LogRecord down;
    down.round = round;
    down.institution = inst_name(node.id);
    down.phase = "broadcast";
    down.bytes_sent = broadcast.total_bytes();
    down.seed = node.seed;
    log.append(down);
    ParamSet received = params_from_message(broadcast);

    if (cfg.kind == StrategyKind::FedSgd) {
      // one full-local-data gradient per round
      node.params = received;
      auto [batch, targets] = ds.gather(node.indices);
      LossGrad lg = loss_and_grad(model, node.params, batch, targets);
      Message up = make_param_message(MessageKind::Gradients, round32, lg.grads, inst_name(node.id), "server");
      LogRecord uplog;
      uplog.round = round;
      uplog.institution = inst_name(node.id);
      uplog.phase = "upload";
      uplog.loss = lg.loss;
      uplog.bytes_sent = up.total_bytes();
      uplog.seed = node.seed;
      log.append(uplog);
      updates.emplace_back(params_from_message(up), node.indices.size());
    } else {
      std::optional<ProxTerm> prox;
      if (cfg.kind == StrategyKind::FedProx) prox = ProxTerm{cfg.mu, received};
      node.opt.learning_rate = cfg.learning_rate;
      node.opt.decay = cfg.lr_decay;
      LocalTrainResult result =
          local_train(node, ds, model, received, iters_per_round(node, cfg.batch_size), cfg.batch_size, round, prox);
      Message up = make_param_message(MessageKind::Weights, round32, result.params, inst_name(node.id), "server");
      for (auto rec : result.log.records()) {
        rec.bytes_sent = up.total_bytes();
        log.append(rec);
      }
      updates.emplace_back(params_from_message(up), result.sample_count);
    }
  }

  ParamSet averaged = aggregate_weighted_mean(updates);
  if (cfg.kind == StrategyKind::FedSgd) {
    OptimizerState server_opt = OptimizerState::sgd(cfg.learning_rate, cfg.lr_decay);
    server_opt.epoch = round;
    optimizer_step(server_opt, server.global, averaged);
  } else if (cfg.kind == StrategyKind::FedAvgM) {
    server_momentum_update(server, averaged, cfg.server_momentum);
  } else {
    server.global = averaged;
  }
  server.round++;
}

void run_cwt_cycle(CentralServer& server, std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                   const ModelGraph& model, TrainingLog& log, std::vector<ParamSet>* checkpoints) {
  const StrategyConfig& cfg = server.cfg;
  if (cfg.kind != StrategyKind::Cwt && cfg.kind != StrategyKind::CwtReplay) {
    throw std::invalid_argument("run_cwt_cycle: strategy " + strategy_name(cfg.kind) + " is not cyclic");
  }
  cfg.validate();
  std::size_t round = server.round;
  auto round32 = static_cast<std::uint32_t>(round);

  ParamSet weights = server.global;
  std::string carrier = "server";
  for (auto& node : nodes) {
    Message hop = make_param_message(MessageKind::Weights, round32, weights, carrier, inst_name(node.id));
    LogRecord hoplog;
    hoplog.round = round;
    hoplog.institution = inst_name(node.id);
    hoplog.phase = "cwt_transfer";
    hoplog.bytes_sent = hop.total_bytes();
    hoplog.seed = node.seed;
    log.append(hoplog);
    ParamSet received = params_from_message(hop);

    node.opt.learning_rate = cfg.learning_rate;
    node.opt.decay = cfg.lr_decay;
    std::size_t iters = cfg.local_epochs * iters_per_round(node, cfg.batch_size);
    LocalTrainResult result = local_train(node, ds, model, received, iters, cfg.batch_size, round);
    for (auto rec : result.log.records()) {
      rec.phase = "cwt_visit";
      log.append(rec);
    }
    weights = result.params;
    carrier = inst_name(node.id);
    if (checkpoints) checkpoints->push_back(weights);
  }
  Message back = make_param_message(MessageKind::Weights, round32, weights, carrier, "server");
  LogRecord backlog;
  backlog.round = round;
  backlog.institution = carrier;
  backlog.phase = "cwt_return";
  backlog.bytes_sent = back.total_bytes();
  log.append(backlog);
  server.global = params_from_message(back);
  server.round++;
}

SplitStepResult split_loss_and_grad(const ModelGraph& model, const ParamSet& head_params, const ParamSet& tail_params,
                                    std::size_t cut_index, const TensorF& batch, const TensorF& targets,
                                    std::uint32_t round) {
  CutSplit split = split_at_cut_layer(model, cut_index);

  ForwardTrace head_trace;
  TensorF activations = forward_traced(split.head, head_params, batch, head_trace);

  Message act_msg = make_tensor_message(MessageKind::Activations, round, "activations", activations, "client",
                                        "server");
  Message target_msg = make_tensor_message(MessageKind::Activations, round, "targets", targets, "client", "server");
  TensorF server_acts = tensor_from_message(act_msg);
  TensorF server_targets = tensor_from_message(target_msg);

  ForwardTrace tail_trace;
  TensorF output = forward_traced(split.tail, tail_params, server_acts, tail_trace);
  TensorF output_grad;
  SplitStepResult result;
  result.loss = loss_and_output_grad(split.tail, output, server_targets, output_grad);
  result.tail_grads = tail_params.zeros_like();
  TensorF activation_grads;
  graph_backward(split.tail, tail_params, tail_trace, output_grad, &result.tail_grads, &activation_grads);

  Message grad_msg = make_tensor_message(MessageKind::ActivationGrads, round, "activation_grads", activation_grads,
                                         "server", "client");
  TensorF client_grads = tensor_from_message(grad_msg);

  result.head_grads = head_params.zeros_like();
  graph_backward(split.head, head_params, head_trace, client_grads, &result.head_grads, nullptr);

  result.activation_bytes = tensor_payload_data_bytes(activations);
  result.activation_grad_bytes = tensor_payload_data_bytes(activation_grads);
  result.message_bytes =
      act_msg.total_bytes() + target_msg.total_bytes() + grad_msg.total_bytes();
  return result;
}

void run_splitnn_cycle(CentralServer& server, std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                       const ModelGraph& model, TrainingLog& log) {
  const StrategyConfig& cfg = server.cfg;
  if (cfg.kind != StrategyKind::SplitNn) {
    throw std::invalid_argument("run_splitnn_cycle: strategy " + strategy_name(cfg.kind) + " is not splitnn");
  }
  cfg.validate();
  std::size_t round = server.round;
  auto round32 = static_cast<std::uint32_t>(round);

  auto [head_params, tail_params] = split_params(model, server.global, cfg.cut_index);
  OptimizerState tail_opt = OptimizerState::sgd(cfg.learning_rate, cfg.lr_decay);
  tail_opt.epoch = round;

  ParamSet head = head_params;
  std::string carrier = "server";
  for (auto& node : nodes) {
    Message hop = make_param_message(MessageKind::Weights, round32, head, carrier, inst_name(node.id));
    LogRecord hoplog;
    hoplog.round = round;
    hoplog.institution = inst_name(node.id);
    hoplog.phase = "splitnn_head_transfer";
    hoplog.bytes_sent = hop.total_bytes();
    hoplog.seed = node.seed;
    log.append(hoplog);
    head = params_from_message(hop);

    node.opt.learning_rate = cfg.learning_rate;
    node.opt.decay = cfg.lr_decay;
    node.opt.epoch = round;

    BatchStream stream(node, cfg.batch_size, round);
    std::size_t iters = iters_per_round(node, cfg.batch_size);
    double loss_sum = 0.0;
    std::size_t bytes = 0;
    for (std::size_t it = 0; it < iters; ++it) {
      auto batch_indices = stream.next();
      auto [batch, targets] = ds.gather(batch_indices);
      SplitStepResult step = split_loss_and_grad(model, head, tail_params, cfg.cut_index, batch, targets, round32);
      optimizer_step(tail_opt, tail_params, step.tail_grads);
      optimizer_step(node.opt, head, step.head_grads);
      loss_sum += step.loss;
      bytes += step.message_bytes;
    }
    LogRecord visit;
    visit.round = round;
    visit.institution = inst_name(node.id);
    visit.phase = "splitnn_visit";
    visit.loss = iters ? loss_sum / static_cast<double>(iters) : 0.0;
    visit.bytes_sent = bytes;
    visit.seed = node.seed;
    log.append(visit);
    carrier = inst_name(node.id);
  }

  server.global = merge_split_params(model, head, tail_params, cfg.cut_index);
  server.round++;
}

ParamSet run_centralized(const LabeledDataset& ds, const ModelGraph& model, const StrategyConfig& cfg,
                         std::uint64_t experiment_seed, TrainingLog& log) {
  PartitionPlan whole;
  whole.seed = experiment_seed;
  whole.assignments.resize(1);
  whole.assignments[0].resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) whole.assignments[0][i] = i;

  OptimizerState opt = cfg.momentum > 0.0f ? OptimizerState::sgd_momentum(cfg.learning_rate, cfg.momentum, cfg.lr_decay)
                                           : OptimizerState::sgd(cfg.learning_rate, cfg.lr_decay);
  auto nodes = make_nodes(whole, experiment_seed, opt);
  ParamSet params = init_params(model, experiment_seed);
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    std::size_t iters = cfg.local_epochs * iters_per_round(nodes[0], cfg.batch_size);
    LocalTrainResult result = local_train(nodes[0], ds, model, params, iters, cfg.batch_size, round);
    params = result.params;
    for (auto rec : result.log.records()) {
      rec.institution = "central";
      rec.phase = "central_train";
      log.append(rec);
    }
  }
  return params;
}

ParamSet merge_split_params(const ModelGraph& model, const ParamSet& head, const ParamSet& tail,
                            std::size_t cut_index) {
  ParamSet merged;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (!model.layers[i].has_params()) continue;
    bool in_head = i < cut_index;
    std::size_t local = in_head ? i : i - cut_index;
    const ParamSet& src = in_head ? head : tail;
    std::string local_prefix = "layer" + std::to_string(local);
    std::string full_prefix = "layer" + std::to_string(i);
    merged.add(full_prefix + ".weight", src.at(local_prefix + ".weight"));
    merged.add(full_prefix + ".bias", src.at(local_prefix + ".bias"));
  }
  return merged;
}

}  // namespace hfsim
