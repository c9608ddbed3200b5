#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hfsim/dataset.hpp"
#include "hfsim/model.hpp"
#include "hfsim/param_set.hpp"

namespace hfsim {

/// Task metric: classification accuracy in [0,1] (higher is better) or
/// regression mean absolute error >= 0 (lower is better).
double evaluate(const ModelGraph& model, const ParamSet& params, const LabeledDataset& ds);

/// K x K grid of evaluate() results: entry (i, j) scores the checkpoint taken
/// after institution j's visit on institution i's data.
struct ForgettingMatrix {
  std::vector<std::vector<double>> values;  // [data i][model j]
  std::string metric_name;

  std::size_t institutions() const { return values.size(); }
};

ForgettingMatrix forgetting_matrix(const ModelGraph& model, const std::vector<ParamSet>& checkpoints,
                                   const std::vector<LabeledDataset>& institution_data);

/// CSV layout: header "data\model,Inst1..InstK", one row per institution's data.
std::string forgetting_matrix_csv(const ForgettingMatrix& matrix);

/// Mean and sample standard deviation (ddof=1; 0 when runs == 1).
struct RunSummary {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t runs = 0;
};

RunSummary aggregate_runs(const std::vector<double>& metrics);

}  // namespace hfsim
