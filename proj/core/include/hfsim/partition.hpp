#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "hfsim/dataset.hpp"

namespace hfsim {

/// Per-institution index assignment over a dataset. Lists are disjoint until
/// apply_global_share appends the shared pool to every institution.
struct PartitionPlan {
  std::vector<std::vector<std::size_t>> assignments;
  std::uint64_t seed = 0;
  std::vector<std::size_t> shared_pool;  // empty unless a global share was applied

  std::size_t institutions() const { return assignments.size(); }
  void validate(std::size_t dataset_size) const;
};

/// Target label mix per institution. For classification, each row gives
/// per-class proportions; for regression, per-quantile-band weights (bands
/// split the observed label range evenly). Rows sum to 1 within 1e-9.
struct SkewSpec {
  std::vector<std::vector<double>> proportions;  // K rows
  std::vector<std::size_t> sizes;               // samples per institution

  void validate() const;
};

/// Stratified split: per-institution label distributions match the global
/// distribution as closely as integer counts allow; sizes differ by <= 1.
PartitionPlan partition_iid(const LabeledDataset& ds, std::size_t institutions, std::uint64_t seed);

/// Draw without replacement to match each institution's proportion row.
/// Throws (naming the deficit) if a label runs out of samples.
PartitionPlan partition_by_proportions(const LabeledDataset& ds, const SkewSpec& spec, std::uint64_t seed);

/// Mean two-sample Kolmogorov-Smirnov statistic over all institution pairs'
/// empirical label CDFs. 0 = identical distributions, 1 = disjoint.
double ks_skewness(const LabeledDataset& ds, const PartitionPlan& plan);

/// Append a stratified global pool of floor(share_fraction * N) samples to
/// every institution (samples are duplicated, not moved).
PartitionPlan apply_global_share(const LabeledDataset& ds, const PartitionPlan& plan, double share_fraction,
                                 std::uint64_t seed);

/// Text format: header "K=<int> seed=<int>", then one line of
/// space-separated indices per institution.
void save_partition_plan(const PartitionPlan& plan, const std::string& path);
PartitionPlan load_partition_plan(const std::string& path);

}  // namespace hfsim
