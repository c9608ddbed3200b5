#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hfsim/dataset.hpp"
#include "hfsim/message.hpp"
#include "hfsim/model.hpp"
#include "hfsim/optimizer.hpp"
#include "hfsim/param_set.hpp"
#include "hfsim/partition.hpp"
#include "hfsim/training_log.hpp"

namespace hfsim {

enum class StrategyKind {
  FedAvg,
  FedSgd,
  FedAvgM,
  FedProx,
  FedAvgShare,
  Cwt,
  SplitNn,
  CwtReplay,
  FedReplay,
};

std::string strategy_name(StrategyKind kind);
StrategyKind strategy_from_name(const std::string& name);

struct ReplayParams {
  std::size_t generator_epochs = 20;  // epochs per institution visit
  float generator_lr = 2e-3f;
  DecaySchedule generator_decay{150, 2.0f};
  float commitment_weight = 0.25f;
  std::size_t codebook_size = 32;
  std::size_t embed_dim = 8;
  double replay_ratio = 1.0;      // replay batch size as a fraction of the real batch
  std::size_t server_epochs = 20; // FedReplay server training epochs
  float server_lr = 0.02f;        // FedReplay server training rate
  std::size_t encoder_epochs = 6; // FedReplay encoder pre-training budget
  std::size_t generator_passes = 1;
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::FedAvg;
  std::size_t rounds = 10;
  std::size_t batch_size = 32;
  double participation = 1.0;  // all institutions take part in every round
  float learning_rate = 0.001f;
  DecaySchedule lr_decay{35, 10.0f};
  float momentum = 0.0f;        // local SGD momentum
  float mu = 0.0f;              // FedProx proximal weight
  float server_momentum = 0.9f; // FedAvgM beta
  double share_fraction = 0.05; // FedAvg+Share pool size
  std::size_t cut_index = 1;    // SplitNn / FedReplay cut layer
  std::size_t local_epochs = 1; // epochs per CWT visit
  ReplayParams replay;

  /// Total validation before any training; throws on the first bad field.
  void validate() const;
};

struct InstitutionNode {
  std::size_t id = 0;                // 0-based; logs print Inst<id+1>
  std::vector<std::size_t> indices;  // view into the global dataset
  ParamSet params;
  OptimizerState opt;
  std::uint64_t seed = 0;
};

struct CentralServer {
  ParamSet global;
  ParamSet momentum_buf;  // FedAvgM velocity
  std::size_t round = 0;
  StrategyConfig cfg;
};

std::vector<InstitutionNode> make_nodes(const PartitionPlan& plan, std::uint64_t experiment_seed,
                                        const OptimizerState& opt_template);

struct ProxTerm {
  float mu = 0.0f;
  ParamSet anchor;
};

struct LocalTrainResult {
  ParamSet params;
  std::size_t sample_count = 0;
  TrainingLog log;
};

/// Runs `iters` minibatch steps from global_params on the node's local view.
/// Indices are reshuffled once per local epoch from a stream derived from
/// (node seed, round, epoch). With a proximal term, the effective gradient is
/// grad + mu * (theta - anchor).
LocalTrainResult local_train(InstitutionNode& node, const LabeledDataset& ds, const ModelGraph& model,
                             const ParamSet& global_params, std::size_t iters, std::size_t batch_size,
                             std::size_t round, const std::optional<ProxTerm>& prox = std::nullopt);

/// Elementwise mean weighted by sample counts. A single update is returned
/// unchanged.
ParamSet aggregate_weighted_mean(const std::vector<std::pair<ParamSet, std::size_t>>& updates);

/// v <- beta * v + (w - averaged); w <- averaged - beta * v_old.
/// (Algebraically w - v_new; this form is exact at beta == 0.)
ParamSet server_momentum_update(CentralServer& server, const ParamSet& averaged, float beta);

/// One synchronous round of a parallel strategy (FedAvg family or FedSgd).
void run_parallel_round(CentralServer& server, std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                        const ModelGraph& model, TrainingLog& log);

/// One full serial cycle over all institutions in index order. A checkpoint
/// of the weights leaving each institution is appended to `checkpoints` when
/// given (feeds the forgetting matrix).
void run_cwt_cycle(CentralServer& server, std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                   const ModelGraph& model, TrainingLog& log, std::vector<ParamSet>* checkpoints = nullptr);

/// Loss and gradients computed across the cut-layer message boundary;
/// byte-identical activations travel in real Message frames. Equivalent to
/// loss_and_grad on the fused model.
struct SplitStepResult {
  double loss = 0.0;
  ParamSet head_grads;
  ParamSet tail_grads;
  std::size_t activation_bytes = 0;       // f32 payload of the activations message
  std::size_t activation_grad_bytes = 0;  // f32 payload of the gradients message
  std::size_t message_bytes = 0;          // full framed traffic both ways
};

SplitStepResult split_loss_and_grad(const ModelGraph& model, const ParamSet& head_params, const ParamSet& tail_params,
                                    std::size_t cut_index, const TensorF& batch, const TensorF& targets,
                                    std::uint32_t round);

/// One peer-to-peer split-learning cycle: the head hops between institutions,
/// the tail trains on the server, activations and activation gradients cross
/// the boundary per minibatch.
void run_splitnn_cycle(CentralServer& server, std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                       const ModelGraph& model, TrainingLog& log);

/// Single-site training with the same iteration schedule and seed streams as
/// a K=1 federation; the benchmark reference for the reduction identities.
ParamSet run_centralized(const LabeledDataset& ds, const ModelGraph& model, const StrategyConfig& cfg,
                         std::uint64_t experiment_seed, TrainingLog& log);

/// Reassemble a full-model ParamSet from split head/tail sets.
ParamSet merge_split_params(const ModelGraph& model, const ParamSet& head, const ParamSet& tail,
                            std::size_t cut_index);

}  // namespace hfsim
