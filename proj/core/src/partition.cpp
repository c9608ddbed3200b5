#include "hfsim/partition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hfsim/rng.hpp"

namespace hfsim {

void PartitionPlan::validate(std::size_t dataset_size) const {
  if (assignments.empty()) throw std::invalid_argument("partition plan: no institutions");
  std::set<std::size_t> seen;
  std::set<std::size_t> pool(shared_pool.begin(), shared_pool.end());
  for (std::size_t k = 0; k < assignments.size(); ++k) {
    if (assignments[k].empty()) {
      throw std::invalid_argument("partition plan: institution " + std::to_string(k) + " is empty");
    }
    for (std::size_t idx : assignments[k]) {
      if (idx >= dataset_size) {
        throw std::invalid_argument("partition plan: index " + std::to_string(idx) + " out of range");
      }
      if (!seen.insert(idx).second && !pool.count(idx)) {
        throw std::invalid_argument("partition plan: index " + std::to_string(idx) +
                                    " assigned to multiple institutions");
      }
    }
  }
}

void SkewSpec::validate() const {
  if (proportions.empty() || proportions.size() != sizes.size()) {
    throw std::invalid_argument("skew spec: need one proportion row and size per institution");
  }
  std::size_t cols = proportions[0].size();
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    if (proportions[k].size() != cols) throw std::invalid_argument("skew spec: ragged proportion rows");
    double sum = 0.0;
    for (double p : proportions[k]) {
      if (p < 0.0) throw std::invalid_argument("skew spec: negative proportion");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("skew spec: row " + std::to_string(k) + " sums to " + std::to_string(sum));
    }
    if (sizes[k] == 0) throw std::invalid_argument("skew spec: institution size must be positive");
  }
}

namespace {

// Bucket samples by label: class index for classification, even quantile
// bands over the observed label range for regression.
std::vector<std::vector<std::size_t>> label_pools(const LabeledDataset& ds, std::size_t bands) {
  std::vector<std::vector<std::size_t>> pools;
  if (ds.task_kind == TaskKind::Classification) {
    pools.resize(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) pools[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  } else {
    pools.resize(bands);
    auto [mn_it, mx_it] = std::minmax_element(ds.labels.begin(), ds.labels.end());
    float mn = *mn_it, mx = *mx_it;
    float span = std::max(mx - mn, 1e-12f);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto b = static_cast<std::size_t>((ds.labels[i] - mn) / span * static_cast<float>(bands));
      pools[std::min(b, bands - 1)].push_back(i);
    }
  }
  return pools;
}

// Largest-remainder apportionment of `total` into integer counts ~ weights.
std::vector<std::size_t> apportion(const std::vector<double>& weights, std::size_t total) {
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double exact = wsum > 0.0 ? weights[i] / wsum * static_cast<double>(total) : 0.0;
    counts[i] = static_cast<std::size_t>(exact);
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) counts[remainders[i % remainders.size()].second]++;
  return counts;
}

}  // namespace

PartitionPlan partition_iid(const LabeledDataset& ds, std::size_t institutions, std::uint64_t seed) {
  ds.validate();
  if (institutions == 0) throw std::invalid_argument("partition_iid: need at least one institution");
  if (institutions > ds.size()) {
    throw std::invalid_argument("partition_iid: more institutions (" + std::to_string(institutions) +
                                ") than samples (" + std::to_string(ds.size()) + ")");
  }
  PartitionPlan plan;
  plan.seed = seed;
  plan.assignments.resize(institutions);

  Rng rng(seed_mix(seed, 0x11dULL));
  std::size_t cursor = 0;  // global round-robin cursor keeps sizes within 1

  if (ds.task_kind == TaskKind::Classification) {
    auto pools = label_pools(ds, 0);
    for (auto& pool : pools) {
      rng.shuffle(pool);
      for (std::size_t idx : pool) plan.assignments[cursor++ % institutions].push_back(idx);
    }
  } else {
    // deal in label order so every institution spans the label range evenly
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ds.labels[a] < ds.labels[b]; });
    for (std::size_t idx : order) plan.assignments[cursor++ % institutions].push_back(idx);
  }
  plan.validate(ds.size());
  return plan;
}

PartitionPlan partition_by_proportions(const LabeledDataset& ds, const SkewSpec& spec, std::uint64_t seed) {
  ds.validate();
  spec.validate();
  std::size_t bands = spec.proportions[0].size();
  if (ds.task_kind == TaskKind::Classification && bands != ds.num_classes) {
    throw std::invalid_argument("partition_by_proportions: proportion rows have " + std::to_string(bands) +
                                " columns but the dataset has " + std::to_string(ds.num_classes) + " classes");
  }
  auto pools = label_pools(ds, bands);
  Rng rng(seed_mix(seed, 0x9a0ULL));
  for (auto& pool : pools) rng.shuffle(pool);
  std::vector<std::size_t> taken(bands, 0);

  // dry-run demand check so the error can list every deficit at once
  std::vector<std::size_t> demand(bands, 0);
  std::vector<std::vector<std::size_t>> want(spec.sizes.size());
  for (std::size_t k = 0; k < spec.sizes.size(); ++k) {
    std::vector<double> w(spec.proportions[k].begin(), spec.proportions[k].end());
    want[k] = apportion(w, spec.sizes[k]);
    for (std::size_t b = 0; b < bands; ++b) demand[b] += want[k][b];
  }
  std::ostringstream deficit;
  for (std::size_t b = 0; b < bands; ++b) {
    if (demand[b] > pools[b].size()) {
      deficit << " label " << b << ": need " << demand[b] << ", have " << pools[b].size() << ";";
    }
  }
  if (!deficit.str().empty()) {
    throw std::invalid_argument("partition_by_proportions: insufficient samples:" + deficit.str());
  }

  PartitionPlan plan;
  plan.seed = seed;
  plan.assignments.resize(spec.sizes.size());
  for (std::size_t k = 0; k < spec.sizes.size(); ++k) {
    for (std::size_t b = 0; b < bands; ++b) {
      for (std::size_t i = 0; i < want[k][b]; ++i) plan.assignments[k].push_back(pools[b][taken[b]++]);
    }
  }
  plan.validate(ds.size());
  return plan;
}

double ks_skewness(const LabeledDataset& ds, const PartitionPlan& plan) {
  plan.validate(ds.size());
  std::size_t k = plan.institutions();
  std::vector<std::vector<float>> sorted(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t idx : plan.assignments[i]) sorted[i].push_back(ds.labels[idx]);
    std::sort(sorted[i].begin(), sorted[i].end());
  }
  if (k < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const auto& a = sorted[i];
      const auto& b = sorted[j];
      double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
      std::size_t ia = 0, ib = 0;
      double sup = 0.0;
      while (ia < a.size() && ib < b.size()) {
        float v = std::min(a[ia], b[ib]);
        while (ia < a.size() && a[ia] <= v) ++ia;
        while (ib < b.size() && b[ib] <= v) ++ib;
        sup = std::max(sup, std::fabs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
      }
      total += sup;
    }
  }
  return total / (static_cast<double>(k) * static_cast<double>(k - 1) / 2.0);
}

PartitionPlan apply_global_share(const LabeledDataset& ds, const PartitionPlan& plan, double share_fraction,
                                 std::uint64_t seed) {
  plan.validate(ds.size());
  if (share_fraction <= 0.0 || share_fraction >= 1.0) {
    throw std::invalid_argument("apply_global_share: share_fraction must be in (0, 1)");
  }
  auto pool_size = static_cast<std::size_t>(share_fraction * static_cast<double>(ds.size()));
  if (pool_size == 0) throw std::invalid_argument("apply_global_share: share pool would be empty");

  std::size_t bands = ds.task_kind == TaskKind::Classification ? ds.num_classes : 8;
  auto pools = label_pools(ds, bands);
  Rng rng(seed_mix(seed, 0x5aaeULL));
  for (auto& pool : pools) rng.shuffle(pool);
  std::vector<double> weights;
  for (const auto& pool : pools) weights.push_back(static_cast<double>(pool.size()));
  std::vector<std::size_t> counts = apportion(weights, pool_size);

  PartitionPlan out = plan;
  out.shared_pool.clear();
  for (std::size_t b = 0; b < pools.size(); ++b) {
    for (std::size_t i = 0; i < counts[b] && i < pools[b].size(); ++i) out.shared_pool.push_back(pools[b][i]);
  }
  for (auto& assignment : out.assignments) {
    assignment.insert(assignment.end(), out.shared_pool.begin(), out.shared_pool.end());
  }
  return out;
}

void save_partition_plan(const PartitionPlan& plan, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_partition_plan: cannot open '" + path + "'");
  out << "K=" << plan.institutions() << " seed=" << plan.seed << "\n";
  for (const auto& assignment : plan.assignments) {
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (i) out << ' ';
      out << assignment[i];
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_partition_plan: write failed for '" + path + "'");
}

PartitionPlan load_partition_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_partition_plan: cannot open '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("load_partition_plan: missing header");
  std::size_t k = 0;
  std::uint64_t seed = 0;
  if (std::sscanf(header.c_str(), "K=%zu seed=%llu", &k, reinterpret_cast<unsigned long long*>(&seed)) != 2) {
    throw std::runtime_error("load_partition_plan: malformed header '" + header + "'");
  }
  PartitionPlan plan;
  plan.seed = seed;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::size_t> indices;
    std::size_t idx;
    while (ls >> idx) indices.push_back(idx);
    plan.assignments.push_back(std::move(indices));
  }
  if (plan.assignments.size() != k) {
    throw std::runtime_error("load_partition_plan: expected " + std::to_string(k) + " institutions, found " +
                             std::to_string(plan.assignments.size()));
  }
  return plan;
}

}  // namespace hfsim
