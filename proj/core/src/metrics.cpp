#include "hfsim/metrics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hfsim/engine.hpp"

namespace hfsim {

double evaluate(const ModelGraph& model, const ParamSet& params, const LabeledDataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  bool classification = ds.task_kind == TaskKind::Classification;
  if (classification && model.output_kind != OutputKind::ClassLogits) {
    throw std::invalid_argument("evaluate: classification dataset but model emits regression output");
  }
  if (!classification && model.output_kind != OutputKind::ScalarRegression) {
    throw std::invalid_argument("evaluate: regression dataset but model emits class logits");
  }

  const std::size_t chunk = 64;  // bounded working set
  double correct = 0.0;
  double abs_err = 0.0;
  for (std::size_t first = 0; first < ds.size(); first += chunk) {
    std::size_t count = std::min(chunk, ds.size() - first);
    std::vector<std::size_t> indices(count);
    std::iota(indices.begin(), indices.end(), first);
    auto [batch, targets] = ds.gather(indices);
    TensorF out = forward(model, params, batch);
    if (classification) {
      std::size_t classes = out.shape[1];
      for (std::size_t i = 0; i < count; ++i) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < classes; ++c) {
          if (out.data[i * classes + c] > out.data[i * classes + arg]) arg = c;
        }
        if (arg == static_cast<std::size_t>(targets.data[i])) correct += 1.0;
      }
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        abs_err += std::fabs(static_cast<double>(out.data[i]) - static_cast<double>(targets.data[i]));
      }
    }
  }
  double n = static_cast<double>(ds.size());
  return classification ? correct / n : abs_err / n;
}

ForgettingMatrix forgetting_matrix(const ModelGraph& model, const std::vector<ParamSet>& checkpoints,
                                   const std::vector<LabeledDataset>& institution_data) {
  if (checkpoints.empty() || checkpoints.size() != institution_data.size()) {
    throw std::invalid_argument("forgetting_matrix: need one checkpoint per institution dataset");
  }
  ForgettingMatrix matrix;
  matrix.metric_name = institution_data[0].task_kind == TaskKind::Classification ? "accuracy" : "mae";
  std::size_t k = checkpoints.size();
  matrix.values.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      matrix.values[i][j] = evaluate(model, checkpoints[j], institution_data[i]);
    }
  }
  return matrix;
}

std::string forgetting_matrix_csv(const ForgettingMatrix& matrix) {
  std::ostringstream os;
  os << "data\\model";
  for (std::size_t j = 0; j < matrix.institutions(); ++j) os << ",Inst" << (j + 1);
  os << "\n";
  for (std::size_t i = 0; i < matrix.institutions(); ++i) {
    os << "Inst" << (i + 1);
    for (std::size_t j = 0; j < matrix.institutions(); ++j) os << "," << matrix.values[i][j];
    os << "\n";
  }
  return os.str();
}

RunSummary aggregate_runs(const std::vector<double>& metrics) {
  if (metrics.empty()) throw std::invalid_argument("aggregate_runs: no runs");
  RunSummary summary;
  summary.runs = metrics.size();
  summary.mean = std::accumulate(metrics.begin(), metrics.end(), 0.0) / static_cast<double>(metrics.size());
  if (metrics.size() >= 2) {
    double ss = 0.0;
    for (double v : metrics) ss += (v - summary.mean) * (v - summary.mean);
    summary.stddev = std::sqrt(ss / static_cast<double>(metrics.size() - 1));
  }
  return summary;
}

}  // namespace hfsim
