#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hfsim/attacks.hpp"
#include "hfsim/dataset.hpp"
#include "hfsim/federation.hpp"
#include "hfsim/metrics.hpp"
#include "hfsim/partition.hpp"
#include "hfsim/replay.hpp"

namespace hfsim {

struct DatasetConfig {
  TaskKind task = TaskKind::Classification;
  std::size_t num_classes = 2;
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t train_samples = 256;
  std::size_t test_samples = 128;
  float noise_sigma = 0.15f;
  float shared_cell_fraction = 0.0f;
};

struct PartitionConfig {
  std::string preset;  // "split1" | "split2" | "split3", or empty with explicit rows
  std::size_t institutions = 4;
  std::vector<std::vector<double>> proportions;  // explicit SkewSpec rows
  std::vector<std::size_t> sizes;
};

struct ModelConfig {
  std::vector<std::size_t> conv_channels{6};
  std::size_t kernel = 3;
  std::vector<std::size_t> dense_hidden{32};
};

struct AttackSection {
  AttackKind kind = AttackKind::Gradient;
  AttackConfig config;
  std::size_t count = 20;
  std::size_t encoder_cut = 1;
};

/// Fully validated experiment description; every run artifact is
/// reproducible from this plus the seed.
struct ExperimentConfig {
  DatasetConfig dataset;
  PartitionConfig partition;
  ModelConfig model;
  StrategyConfig strategy;
  std::optional<AttackSection> attack;
  std::vector<StrategyKind> compare;  // strategies for the compare subcommand
  std::uint64_t seed = 0;
  std::size_t runs = 1;
  std::string out;

  void validate() const;
};

/// Strict parse: unknown keys anywhere are rejected.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

/// Toy CNN backbone from the model section: conv-relu-pool blocks and a
/// dense head sized for the dataset.
ModelGraph build_model(const ModelConfig& model, const DatasetConfig& dataset);

/// Train/test split materialized from one generated pool (class-interleaved,
/// so both halves stay balanced).
struct DatasetBundle {
  LabeledDataset train;
  LabeledDataset test;
};

DatasetBundle build_dataset(const DatasetConfig& cfg, std::uint64_t seed);

/// Partition plan for the config (preset tables or explicit rows).
PartitionPlan build_partition(const LabeledDataset& train, const PartitionConfig& cfg, std::uint64_t seed);

/// One seeded execution of the configured strategy.
struct StrategyOutcome {
  ParamSet final_params;
  ModelGraph model;
  TrainingLog log;
  double test_metric = 0.0;
  std::vector<ParamSet> cycle_checkpoints;  // final cycle's per-visit weights (cyclic strategies)
};

StrategyOutcome execute_strategy(const ExperimentConfig& cfg, StrategyKind kind, const DatasetBundle& data,
                                 const PartitionPlan& plan, std::uint64_t run_seed);

/// Centralized benchmark with the matched iteration schedule.
StrategyOutcome execute_centralized(const ExperimentConfig& cfg, const DatasetBundle& data, std::uint64_t run_seed);

/// Run directory handle: every emitted file is listed in manifest.txt with
/// its size and FNV-1a content hash.
struct RunDirectory {
  std::string path;
  std::vector<std::string> files;

  void write_text(const std::string& name, const std::string& content);
  void write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes);
  void finalize_manifest();
};

/// R seeded runs of the configured strategy; emits config copy, partition
/// plan, per-run logs/checkpoints/metrics, summary.csv and the manifest.
/// On error the partial directory is preserved with an error.txt.
RunDirectory run_experiment(const ExperimentConfig& cfg);

/// Side-by-side strategy comparison over an identical dataset and partition,
/// always including the centralized benchmark row.
std::string compare_strategies(const ExperimentConfig& cfg);

}  // namespace hfsim
