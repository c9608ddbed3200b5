#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "hfsim/experiment.hpp"
#include "hfsim/serialize.hpp"

using namespace hfsim;

namespace {

std::string tiny_config_json(const std::string& out_dir, const char* kind = "fedavg") {
  std::string json = R"({
    "dataset": {"task": "classification", "num_classes": 2, "image_size": 8,
                "train_samples": 64, "test_samples": 32, "noise_sigma": 0.2,
                "shared_cell_fraction": 0.5},
    "partition": {"preset": "split1", "institutions": 4},
    "model": {"conv_channels": [4], "dense_hidden": [16]},
    "strategy": {"kind": ")" + std::string(kind) + R"(", "rounds": 2, "batch_size": 8,
                 "learning_rate": 0.1, "lr_decay_interval": 0},
    "seed": 5,
    "runs": 2,
    "out": ")" + out_dir + R"("
  })";
  return json;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string manifest_without_paths(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("unknown config keys are rejected before any computation") {
  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"dataset": {"task": "classification", "bogus": 1}})"),
                       doctest::Contains("bogus"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"mystery": {}})"), doctest::Contains("mystery"),
                       std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config("{not json"), std::invalid_argument);
}

TEST_CASE("invalid field combinations fail validation") {
  CHECK_THROWS(parse_experiment_config(R"({"strategy": {"rounds": 0}})"));
  CHECK_THROWS(parse_experiment_config(R"({"strategy": {"kind": "warp"}})"));
  CHECK_THROWS(parse_experiment_config(R"({"dataset": {"train_samples": 63}})"));
  CHECK_THROWS(parse_experiment_config(R"({"partition": {"preset": "split9"}})"));
  CHECK_THROWS(parse_experiment_config(R"({"runs": 0})"));
}

TEST_CASE("config survives a json round trip") {
  auto dir = temp_dir("hfsim_cfg_rt");
  ExperimentConfig cfg = parse_experiment_config(tiny_config_json(dir.string()));
  ExperimentConfig back = parse_experiment_config(experiment_config_to_json(cfg));
  CHECK(back.dataset.train_samples == cfg.dataset.train_samples);
  CHECK(back.strategy.kind == cfg.strategy.kind);
  CHECK(back.seed == cfg.seed);
  CHECK(back.runs == cfg.runs);
}

TEST_CASE("build_model matches the dataset geometry") {
  ExperimentConfig cfg = parse_experiment_config(tiny_config_json("unused"));
  ModelGraph model = build_model(cfg.model, cfg.dataset);
  auto out = infer_output_shape(model, {1, 8, 8});
  CHECK(out == std::vector<std::size_t>{2});
}

TEST_CASE("run_experiment emits the expected artifacts and is deterministic") {
  auto dir_a = temp_dir("hfsim_run_a");
  auto dir_b = temp_dir("hfsim_run_b");
  ExperimentConfig cfg = parse_experiment_config(tiny_config_json(dir_a.string()));
  RunDirectory a = run_experiment(cfg);
  CHECK(std::filesystem::exists(dir_a / "config.json"));
  CHECK(std::filesystem::exists(dir_a / "plan.txt"));
  CHECK(std::filesystem::exists(dir_a / "summary.csv"));
  CHECK(std::filesystem::exists(dir_a / "run0" / "training_log.csv"));
  CHECK(std::filesystem::exists(dir_a / "run0" / "model.hfsm"));
  CHECK(std::filesystem::exists(dir_a / "run1" / "final_metrics.csv"));
  CHECK(std::filesystem::exists(dir_a / "manifest.txt"));

  cfg.out = dir_b.string();
  run_experiment(cfg);
  // identical content hashes except the embedded output path in config.json
  std::string ma = manifest_without_paths(dir_a);
  std::string mb = manifest_without_paths(dir_b);
  std::istringstream sa(ma), sb(mb);
  std::string la, lb;
  while (std::getline(sa, la) && std::getline(sb, lb)) {
    if (la.rfind("config.json", 0) == 0) continue;  // differs by the out path only
    CHECK(la == lb);
  }
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("run_experiment preserves a partial directory with error.txt on failure") {
  auto dir = temp_dir("hfsim_run_err");
  ExperimentConfig cfg = parse_experiment_config(tiny_config_json(dir.string()));
  cfg.partition.institutions = 1000;  // more institutions than samples
  CHECK_THROWS(run_experiment(cfg));
  CHECK(std::filesystem::exists(dir / "error.txt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("cwt runs emit a forgetting matrix") {
  auto dir = temp_dir("hfsim_run_cwt");
  ExperimentConfig cfg = parse_experiment_config(tiny_config_json(dir.string(), "cwt"));
  cfg.runs = 1;
  run_experiment(cfg);
  CHECK(std::filesystem::exists(dir / "run0" / "forgetting.csv"));
  std::ifstream in(dir / "run0" / "forgetting.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "data\\model,Inst1,Inst2,Inst3,Inst4");
  std::filesystem::remove_all(dir);
}

TEST_CASE("compare always includes the central benchmark row") {
  ExperimentConfig cfg = parse_experiment_config(tiny_config_json("unused"));
  cfg.out.clear();
  cfg.runs = 1;
  cfg.compare = {StrategyKind::FedAvg};
  std::string csv = compare_strategies(cfg);
  CHECK(csv.find("central,") != std::string::npos);
  CHECK(csv.find("fedavg,") != std::string::npos);

  cfg.compare.clear();
  CHECK_THROWS(compare_strategies(cfg));
}

TEST_CASE("preset partitions hit their KS targets") {
  ExperimentConfig cfg = parse_experiment_config(tiny_config_json("unused"));
  cfg.dataset.train_samples = 512;
  cfg.dataset.test_samples = 128;
  DatasetBundle data = build_dataset(cfg.dataset, cfg.seed);

  PartitionConfig part = cfg.partition;
  part.preset = "split1";
  CHECK(ks_skewness(data.train, build_partition(data.train, part, cfg.seed)) <= 0.05);
  part.preset = "split2";
  CHECK(ks_skewness(data.train, build_partition(data.train, part, cfg.seed)) == doctest::Approx(0.40).epsilon(0.13));
  part.preset = "split3";
  CHECK(ks_skewness(data.train, build_partition(data.train, part, cfg.seed)) == doctest::Approx(0.61).epsilon(0.09));
}

TEST_CASE("regression presets have increasing skew") {
  ExperimentConfig cfg = parse_experiment_config(tiny_config_json("unused"));
  cfg.dataset.task = TaskKind::Regression;
  cfg.dataset.train_samples = 512;
  cfg.dataset.test_samples = 128;
  DatasetBundle data = build_dataset(cfg.dataset, cfg.seed);
  PartitionConfig part = cfg.partition;
  part.preset = "split1";
  double s1 = ks_skewness(data.train, build_partition(data.train, part, cfg.seed));
  part.preset = "split2";
  double s2 = ks_skewness(data.train, build_partition(data.train, part, cfg.seed));
  part.preset = "split3";
  double s3 = ks_skewness(data.train, build_partition(data.train, part, cfg.seed));
  CHECK(s1 < 0.1);
  CHECK(s2 == doctest::Approx(0.63).epsilon(0.12));
  CHECK(s3 == doctest::Approx(0.97).epsilon(0.06));
  CHECK(s1 < s2);
  CHECK(s2 < s3);
}
