#pragma once

#include <cstddef>
#include <vector>

#include "hfsim/model.hpp"
#include "hfsim/param_set.hpp"
#include "hfsim/tensor.hpp"

namespace hfsim {

/// Cached per-layer inputs (and pooling argmax positions) from one forward
/// pass, consumed by graph_backward.
struct ForwardTrace {
  std::vector<TensorF> inputs;                       // inputs.size() == layers + 1; last is the output
  std::vector<std::vector<std::size_t>> pool_argmax;  // per layer; empty unless max pool
};

/// Pure functional forward pass. Batch leading dim is N.
TensorF forward(const ModelGraph& model, const ParamSet& params, const TensorF& batch);

TensorF forward_traced(const ModelGraph& model, const ParamSet& params, const TensorF& batch, ForwardTrace& trace);

/// Reverse pass from dL/d(output). Parameter gradients are accumulated into
/// `grads` (must be zeros_like-compatible with params); input gradient is
/// written to `input_grad` when non-null.
void graph_backward(const ModelGraph& model, const ParamSet& params, const ForwardTrace& trace,
                    const TensorF& output_grad, ParamSet* grads, TensorF* input_grad);

struct LossGrad {
  double loss = 0.0;
  ParamSet grads;
};

/// Batch-mean loss and parameter gradients. Targets are class indices
/// (shape {N} or {N,1}) for cross-entropy and real tensors matching the
/// output for mse/mae.
LossGrad loss_and_grad(const ModelGraph& model, const ParamSet& params, const TensorF& batch, const TensorF& targets);

/// Same as loss_and_grad but also returns dL/d(batch).
LossGrad loss_and_grad_with_input(const ModelGraph& model, const ParamSet& params, const TensorF& batch,
                                  const TensorF& targets, TensorF& input_grad);

/// Forward-only loss evaluation. `batch_id` names the batch in error messages.
double loss_only(const ModelGraph& model, const ParamSet& params, const TensorF& batch, const TensorF& targets,
                 const std::string& batch_id = "batch");

/// Loss value with the gradient of the output distribution, shared by the
/// loss heads. Exposed for the split-learning path.
double loss_and_output_grad(const ModelGraph& model, const TensorF& output, const TensorF& targets,
                            TensorF& output_grad);

/// Central-difference gradient check: perturbs every parameter by +/- epsilon,
/// evaluates the loss in float64, and returns the max relative error against
/// the analytic gradients with denominator max(|a|, |b|, 1e-8).
/// epsilon must lie in [1e-6, 1e-2].
double finite_diff_check(const ModelGraph& model, const ParamSet& params, const TensorF& batch, const TensorF& targets,
                         double epsilon);

}  // namespace hfsim
