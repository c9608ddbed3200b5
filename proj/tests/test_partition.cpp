#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "hfsim/dataset.hpp"
#include "hfsim/partition.hpp"
#include "hfsim/rng.hpp"

using namespace hfsim;

namespace {

SyntheticSpec binary_spec(std::size_t per_class, float sigma = 0.05f) {
  SyntheticSpec spec;
  spec.task_kind = TaskKind::Classification;
  spec.num_classes = 2;
  spec.image_size = 8;
  spec.samples_per_class = per_class;
  spec.noise_sigma = sigma;
  return spec;
}

std::vector<std::size_t> label_counts(const LabeledDataset& ds, const std::vector<std::size_t>& indices,
                                      std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t idx : indices) counts[static_cast<std::size_t>(ds.labels[idx])]++;
  return counts;
}

// Hand-built dataset with explicit labels; images unused by the statistics.
LabeledDataset dataset_with_labels(const std::vector<float>& labels, std::size_t classes) {
  LabeledDataset ds;
  ds.task_kind = TaskKind::Classification;
  ds.num_classes = classes;
  ds.labels = labels;
  ds.images = TensorF::zeros({labels.size(), 1, 4, 4});
  return ds;
}

}  // namespace

TEST_CASE("zero noise makes every class sample identical to its pattern") {
  SyntheticSpec spec = binary_spec(4, 0.0f);
  LabeledDataset ds = make_synthetic_dataset(spec, 3);
  for (std::size_t c = 0; c < 2; ++c) {
    TensorF pattern = synthetic_class_pattern(spec, 3, c);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (static_cast<std::size_t>(ds.labels[i]) != c) continue;
      for (std::size_t j = 0; j < pattern.size(); ++j) {
        CHECK(ds.images.data[i * pattern.size() + j] == pattern.data[j]);
      }
    }
  }
}

TEST_CASE("same seed reproduces the dataset bit for bit") {
  SyntheticSpec spec = binary_spec(16, 0.1f);
  LabeledDataset a = make_synthetic_dataset(spec, 11);
  LabeledDataset b = make_synthetic_dataset(spec, 11);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
}

TEST_CASE("nearest-pattern classifier scores 100% on the emitted set") {
  SyntheticSpec spec = binary_spec(32, 0.1f);
  spec.num_classes = 3;
  LabeledDataset ds = make_synthetic_dataset(spec, 7);
  std::vector<TensorF> patterns;
  for (std::size_t c = 0; c < 3; ++c) patterns.push_back(synthetic_class_pattern(spec, 7, c));
  std::size_t per = patterns[0].size();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double best = 1e300;
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < per; ++j) {
        double r = double(ds.images.data[i * per + j]) - double(patterns[c].data[j]);
        d += r * r;
      }
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    REQUIRE(best_c == static_cast<std::size_t>(ds.labels[i]));
  }
}

TEST_CASE("invalid synthetic specs are rejected") {
  SyntheticSpec spec = binary_spec(4);
  spec.image_size = 3;
  CHECK_THROWS(make_synthetic_dataset(spec, 0));
  spec = binary_spec(4);
  spec.noise_sigma = -0.5f;
  CHECK_THROWS(make_synthetic_dataset(spec, 0));
}

TEST_CASE("iid partition of a 3000+3000 binary set gives each of 4 institutions 750+750") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(3000, 0.0f), 5);
  PartitionPlan plan = partition_iid(ds, 4, 5);
  REQUIRE(plan.institutions() == 4);
  for (const auto& assignment : plan.assignments) {
    CHECK(assignment.size() == 1500);
    auto counts = label_counts(ds, assignment, 2);
    CHECK(counts[0] == 750);
    CHECK(counts[1] == 750);
  }
}

TEST_CASE("iid partition with one institution is the identity") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(8), 2);
  PartitionPlan plan = partition_iid(ds, 1, 2);
  REQUIRE(plan.institutions() == 1);
  std::set<std::size_t> all(plan.assignments[0].begin(), plan.assignments[0].end());
  CHECK(all.size() == ds.size());
}

TEST_CASE("iid partitions have near-zero skewness on any seed") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    LabeledDataset ds = make_synthetic_dataset(binary_spec(101), seed);  // deliberately not divisible by 4
    PartitionPlan plan = partition_iid(ds, 4, seed);
    CHECK(ks_skewness(ds, plan) <= 0.02);
  }
}

TEST_CASE("partition_iid rejects more institutions than samples") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(1), 0);
  CHECK_THROWS(partition_iid(ds, 3, 0));
}

TEST_CASE("disjoint proportion rows give fully split labels and KS 1.0") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(32), 9);
  SkewSpec spec;
  spec.proportions = {{1.0, 0.0}, {0.0, 1.0}};
  spec.sizes = {32, 32};
  PartitionPlan plan = partition_by_proportions(ds, spec, 9);
  auto c0 = label_counts(ds, plan.assignments[0], 2);
  auto c1 = label_counts(ds, plan.assignments[1], 2);
  CHECK(c0[0] == 32);
  CHECK(c0[1] == 0);
  CHECK(c1[0] == 0);
  CHECK(c1[1] == 32);
  CHECK(ks_skewness(ds, plan) == doctest::Approx(1.0));
}

TEST_CASE("global-distribution rows reduce to IID") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(100), 13);
  SkewSpec spec;
  spec.proportions = {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  spec.sizes = {50, 50, 50, 50};
  PartitionPlan plan = partition_by_proportions(ds, spec, 13);
  CHECK(ks_skewness(ds, plan) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("0.8/0.2 versus 0.2/0.8 rows give pairwise KS 0.6") {
  // CDF at label 0: 0.8 vs 0.2 -> sup difference 0.6 (hand computation)
  LabeledDataset ds = make_synthetic_dataset(binary_spec(100), 17);
  SkewSpec spec;
  spec.proportions = {{0.8, 0.2}, {0.2, 0.8}};
  spec.sizes = {100, 100};
  PartitionPlan plan = partition_by_proportions(ds, spec, 17);
  CHECK(ks_skewness(ds, plan) == doctest::Approx(0.6));
}

TEST_CASE("requested proportions are met within one sample per label") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(200), 19);
  SkewSpec spec;
  spec.proportions = {{0.7, 0.3}, {0.45, 0.55}};
  spec.sizes = {101, 67};
  PartitionPlan plan = partition_by_proportions(ds, spec, 19);
  for (std::size_t k = 0; k < 2; ++k) {
    auto counts = label_counts(ds, plan.assignments[k], 2);
    CHECK(plan.assignments[k].size() == spec.sizes[k]);
    for (std::size_t c = 0; c < 2; ++c) {
      double expected = spec.proportions[k][c] * double(spec.sizes[k]);
      CHECK(std::fabs(double(counts[c]) - expected) <= 1.0);
    }
  }
}

TEST_CASE("insufficient samples produce an error listing the deficit") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(10), 21);
  SkewSpec spec;
  spec.proportions = {{1.0, 0.0}, {1.0, 0.0}};
  spec.sizes = {10, 10};
  CHECK_THROWS_WITH_AS(partition_by_proportions(ds, spec, 21), doctest::Contains("need"), std::invalid_argument);
}

TEST_CASE("ks_skewness hand cases") {
  SUBCASE("identical label multisets give 0") {
    LabeledDataset ds = dataset_with_labels({0, 1, 0, 1, 0, 1, 0, 1}, 2);
    PartitionPlan plan;
    plan.assignments = {{0, 1, 2, 3}, {4, 5, 6, 7}};
    CHECK(ks_skewness(ds, plan) == doctest::Approx(0.0));
  }
  SUBCASE("labels {1,1,2,2} vs {2,2,3,3} give 0.5") {
    LabeledDataset ds = dataset_with_labels({1, 1, 2, 2, 2, 2, 3, 3}, 4);
    PartitionPlan plan;
    plan.assignments = {{0, 1, 2, 3}, {4, 5, 6, 7}};
    CHECK(ks_skewness(ds, plan) == doctest::Approx(0.5));
  }
  SUBCASE("disjoint binary labels give 1.0") {
    LabeledDataset ds = dataset_with_labels({0, 0, 0, 1, 1, 1}, 2);
    PartitionPlan plan;
    plan.assignments = {{0, 1, 2}, {3, 4, 5}};
    CHECK(ks_skewness(ds, plan) == doctest::Approx(1.0));
  }
  SUBCASE("empty institution is an error") {
    LabeledDataset ds = dataset_with_labels({0, 1}, 2);
    PartitionPlan plan;
    plan.assignments = {{0, 1}, {}};
    CHECK_THROWS(ks_skewness(ds, plan));
  }
  SUBCASE("symmetric in institution order") {
    LabeledDataset ds = dataset_with_labels({0, 0, 1, 1, 0, 1, 1, 1}, 2);
    PartitionPlan a, b;
    a.assignments = {{0, 1, 2, 3}, {4, 5, 6, 7}};
    b.assignments = {{4, 5, 6, 7}, {0, 1, 2, 3}};
    CHECK(ks_skewness(ds, a) == doctest::Approx(ks_skewness(ds, b)));
  }
}

TEST_CASE("global share appends a stratified pool to every institution") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(3000, 0.0f), 23);
  PartitionPlan plan = partition_iid(ds, 4, 23);
  PartitionPlan shared = apply_global_share(ds, plan, 0.05, 23);
  REQUIRE(shared.shared_pool.size() == 300);  // floor(0.05 * 6000)
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(shared.assignments[k].size() == plan.assignments[k].size() + 300);
    for (std::size_t i = 0; i < plan.assignments[k].size(); ++i) {
      CHECK(shared.assignments[k][i] == plan.assignments[k][i]);
    }
  }
  // pool label mix matches the global 50/50 within rounding
  auto counts = label_counts(ds, shared.shared_pool, 2);
  CHECK(std::fabs(double(counts[0]) - 150.0) <= 1.0);
}

TEST_CASE("share fraction bounds are enforced") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(8), 2);
  PartitionPlan plan = partition_iid(ds, 2, 2);
  CHECK_THROWS(apply_global_share(ds, plan, 0.0, 2));
  CHECK_THROWS(apply_global_share(ds, plan, 1.0, 2));
  CHECK_THROWS(apply_global_share(ds, plan, -0.1, 2));
}

TEST_CASE("partitioners are deterministic per seed") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(64), 31);
  PartitionPlan a = partition_iid(ds, 4, 31);
  PartitionPlan b = partition_iid(ds, 4, 31);
  CHECK(a.assignments == b.assignments);
  PartitionPlan c = partition_iid(ds, 4, 32);
  CHECK(a.assignments != c.assignments);
}

TEST_CASE("regression iid split spans the label range evenly") {
  SyntheticSpec spec;
  spec.task_kind = TaskKind::Regression;
  spec.total_samples = 400;
  spec.image_size = 8;
  spec.noise_sigma = 0.02f;
  LabeledDataset ds = make_synthetic_dataset(spec, 37);
  PartitionPlan plan = partition_iid(ds, 4, 37);
  CHECK(ks_skewness(ds, plan) < 0.05);
}

TEST_CASE("regression quantile-band skew hits its target") {
  SyntheticSpec spec;
  spec.task_kind = TaskKind::Regression;
  spec.total_samples = 2000;
  spec.image_size = 8;
  LabeledDataset ds = make_synthetic_dataset(spec, 41);
  SkewSpec skew;
  skew.proportions = {{0.7, 0.1, 0.1, 0.1},
                      {0.1, 0.7, 0.1, 0.1},
                      {0.1, 0.1, 0.7, 0.1},
                      {0.1, 0.1, 0.1, 0.7}};
  skew.sizes = {400, 400, 400, 400};
  PartitionPlan plan = partition_by_proportions(ds, skew, 41);
  CHECK(ks_skewness(ds, plan) == doctest::Approx(0.6).epsilon(0.1));
}

TEST_CASE("partition plan round-trips through its text format") {
  LabeledDataset ds = make_synthetic_dataset(binary_spec(32), 43);
  PartitionPlan plan = partition_iid(ds, 3, 43);
  std::string path = (std::filesystem::temp_directory_path() / "hfsim_plan_test.txt").string();
  save_partition_plan(plan, path);
  PartitionPlan back = load_partition_plan(path);
  CHECK(back.assignments == plan.assignments);
  CHECK(back.seed == plan.seed);
  std::remove(path.c_str());
}
