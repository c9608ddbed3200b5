#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "hfsim/attacks.hpp"
#include "hfsim/engine.hpp"
#include "hfsim/experiment.hpp"
#include "hfsim/metrics.hpp"
#include "hfsim/partition.hpp"
#include "hfsim/rng.hpp"
#include "hfsim/serialize.hpp"

using namespace hfsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> runs;
};

ExperimentConfig load_config(const GlobalArgs& args) {
  if (args.config_path.empty()) throw std::invalid_argument("missing --config PATH");
  ExperimentConfig cfg = load_experiment_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.out) cfg.out = *args.out;
  if (args.runs) cfg.runs = *args.runs;
  cfg.validate();
  return cfg;
}

int cmd_partition(const GlobalArgs& args) {
  ExperimentConfig cfg = load_config(args);
  DatasetBundle data = build_dataset(cfg.dataset, cfg.seed);
  PartitionPlan plan = build_partition(data.train, cfg.partition, cfg.seed);
  double ks = ks_skewness(data.train, plan);
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    save_partition_plan(plan, (std::filesystem::path(cfg.out) / "plan.txt").string());
  }
  std::printf("institutions=%zu samples=%zu ks_skewness=%.4f\n", plan.institutions(), data.train.size(), ks);
  return kExitOk;
}

int cmd_train(const GlobalArgs& args) {
  ExperimentConfig cfg = load_config(args);
  RunDirectory dir = run_experiment(cfg);
  std::printf("run directory: %s (%zu files)\n", dir.path.c_str(), dir.files.size());
  return kExitOk;
}

int cmd_with_kind(const GlobalArgs& args, StrategyKind kind) {
  ExperimentConfig cfg = load_config(args);
  cfg.strategy.kind = kind;
  RunDirectory dir = run_experiment(cfg);
  std::printf("run directory: %s (%zu files)\n", dir.path.c_str(), dir.files.size());
  return kExitOk;
}

int cmd_attack(const GlobalArgs& args, const std::string& kind_name, double alpha, std::size_t iters,
               std::size_t count, std::optional<std::uint64_t> seed_flag) {
  ExperimentConfig cfg = load_config(args);
  if (!cfg.attack) cfg.attack = AttackSection{};
  if (!kind_name.empty()) {
    cfg.attack->kind = kind_name == "model" ? AttackKind::Model : AttackKind::Gradient;
  }
  if (alpha >= 0.0) cfg.attack->config.alpha = alpha;
  if (iters > 0) cfg.attack->config.max_iters = iters;
  if (count > 0) cfg.attack->count = count;
  cfg.attack->config.seed = seed_flag ? *seed_flag : cfg.seed;
  if (cfg.out.empty()) throw std::invalid_argument("attack: missing --out DIR");
  std::filesystem::create_directories(cfg.out);

  // the attacked model: the configured backbone trained centrally
  DatasetBundle data = build_dataset(cfg.dataset, cfg.seed);
  StrategyOutcome trained = execute_centralized(cfg, data, seed_mix(cfg.seed, 0x2115ULL, 0));
  AttackReport report = attack_report(trained.model, trained.final_params, data.test, cfg.attack->count,
                                      cfg.attack->kind, cfg.attack->encoder_cut, cfg.attack->config, cfg.out);
  std::ofstream csv(std::filesystem::path(cfg.out) / "psnr.csv", std::ios::trunc);
  csv << report.csv;
  std::printf("attacked %zu images: mean psnr %.2f dB (std %.2f), %zu failures\n", report.rows.size(),
              report.mean_psnr, report.std_psnr, report.failures);
  return kExitOk;
}

int cmd_compare(const GlobalArgs& args) {
  ExperimentConfig cfg = load_config(args);
  std::string csv = compare_strategies(cfg);
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    std::ofstream out(std::filesystem::path(cfg.out) / "comparison.csv", std::ios::trunc);
    out << csv;
  }
  std::fputs(csv.c_str(), stdout);
  return kExitOk;
}

int cmd_report(const std::string& in_dir, const std::string& out_dir) {
  // aggregate per-run final_metrics.csv files into summary.csv
  std::vector<double> values;
  std::string strategy, split, metric;
  for (std::size_t run = 0;; ++run) {
    std::filesystem::path path = std::filesystem::path(in_dir) / ("run" + std::to_string(run)) / "final_metrics.csv";
    if (!std::filesystem::exists(path)) break;
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    std::stringstream ss(row);
    std::string value;
    std::vector<std::string> fields;
    while (std::getline(ss, value, ',')) fields.push_back(value);
    if (fields.size() < 4) throw std::runtime_error("report: malformed " + path.string());
    strategy = fields[0];
    split = fields[1];
    metric = fields[2];
    values.push_back(std::stod(fields[3]));
  }
  if (values.empty()) throw std::runtime_error("report: no run directories under " + in_dir);
  RunSummary summary = aggregate_runs(values);
  std::ostringstream csv;
  csv << "strategy,split,metric,mean,std,runs\n";
  csv << strategy << ',' << split << ',' << metric << ',' << summary.mean << ',' << summary.stddev << ','
      << summary.runs << "\n";
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "summary.csv", std::ios::trunc);
    out << csv.str();
  }
  std::fputs(csv.str().c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hfsim - heterogeneous federation simulator"};
  app.require_subcommand(1);

  GlobalArgs global;
  std::uint64_t seed_value = 0;
  std::string out_value;
  std::size_t runs_value = 0;
  app.add_option("-c,--config", global.config_path, "experiment config (JSON)");
  auto* seed_opt = app.add_option("--seed", seed_value, "override the experiment seed");
  auto* out_opt = app.add_option("--out", out_value, "override the output directory");
  auto* runs_opt = app.add_option("--runs", runs_value, "override the run count");

  auto* partition_cmd = app.add_subcommand("partition", "generate a dataset partition and report its skew");
  auto* train_cmd = app.add_subcommand("train", "run the configured strategy");
  auto* replay_cmd = app.add_subcommand("replay-train", "run serial training with generative replay");
  auto* fedreplay_cmd = app.add_subcommand("fedreplay", "run the one-shot latent pipeline");
  auto* attack_cmd = app.add_subcommand("attack", "reconstruct inputs from shared gradients or latents");
  auto* compare_cmd = app.add_subcommand("compare", "side-by-side strategy comparison");
  auto* report_cmd = app.add_subcommand("report", "aggregate run metrics into summary.csv");

  std::string attack_kind;
  double attack_alpha = -1.0;
  std::size_t attack_iters = 0, attack_count = 0;
  attack_cmd->add_option("--kind", attack_kind, "gradient | model")->check(CLI::IsMember({"gradient", "model"}));
  attack_cmd->add_option("--alpha", attack_alpha, "TV weight");
  attack_cmd->add_option("--iters", attack_iters, "iteration cap");
  attack_cmd->add_option("--count", attack_count, "images to attack");

  std::string report_in, report_out;
  report_cmd->add_option("--in", report_in, "run directory to aggregate")->required();
  report_cmd->add_option("--out", report_out, "where to write summary.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  if (seed_opt->count()) global.seed = seed_value;
  if (out_opt->count()) global.out = out_value;
  if (runs_opt->count()) global.runs = runs_value;

  try {
    if (partition_cmd->parsed()) return cmd_partition(global);
    if (train_cmd->parsed()) return cmd_train(global);
    if (replay_cmd->parsed()) return cmd_with_kind(global, StrategyKind::CwtReplay);
    if (fedreplay_cmd->parsed()) return cmd_with_kind(global, StrategyKind::FedReplay);
    if (attack_cmd->parsed()) {
      return cmd_attack(global, attack_kind, attack_alpha, attack_iters, attack_count, global.seed);
    }
    if (compare_cmd->parsed()) return cmd_compare(global);
    if (report_cmd->parsed()) return cmd_report(report_in, report_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
