#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "hfsim/dataset.hpp"
#include "hfsim/model.hpp"
#include "hfsim/param_set.hpp"
#include "hfsim/tensor.hpp"

namespace hfsim {

/// Anisotropic total variation: sum of absolute adjacent-pixel differences
/// along both spatial axes, summed over leading dims. Subgradient 0 at ties.
double total_variation(const TensorF& img);
TensorF total_variation_subgradient(const TensorF& img);

/// 10 * log10(max_value^2 / MSE); +infinity when the images are identical.
double psnr(const TensorF& a, const TensorF& b, double max_value);

enum class AttackInit { Zeros, UniformNoise, Gray };

struct AttackConfig {
  double alpha = 1e-2;          // TV weight
  std::size_t max_iters = 1000;
  float learning_rate = 0.1f;   // adaptive optimizer on the dummy input
  AttackInit init = AttackInit::UniformNoise;
  std::uint64_t seed = 0;
  std::size_t stall_iters = 0;  // stop early after this many iterations without
                                // improvement (0 = run to max_iters)

  void validate() const;
};

struct ReconstructionResult {
  TensorF recovered;
  double psnr_db = 0.0;  // filled by the harness, not the attack
  std::vector<double> objective_trace;  // best-so-far, non-increasing
  std::size_t iterations_run = 0;
  std::size_t best_iteration = 0;
  double best_objective = 0.0;
};

/// Gradient inversion: recover the input behind a shared parameter gradient
/// by minimizing cosine distance between gradients plus alpha * TV.
/// The input gradient of the cosine term is a mixed second derivative,
/// estimated by central differences of the input gradient along the
/// direction of the cosine weights (two extra backward passes per step).
/// With label_known the true targets guide the attack; otherwise the
/// attacker assumes class 0.
ReconstructionResult gradient_inversion(const ModelGraph& model, const ParamSet& params, const ParamSet& shared_grads,
                                        const std::vector<std::size_t>& input_shape, const TensorF& true_targets,
                                        const AttackConfig& cfg, bool label_known);

/// Model inversion: recover the input behind a shared latent by minimizing
/// squared Euclidean distance in latent space plus alpha * TV.
ReconstructionResult model_inversion(const ModelGraph& encoder, const ParamSet& encoder_params,
                                     const TensorF& shared_latent, const std::vector<std::size_t>& input_shape,
                                     const AttackConfig& cfg);

/// Exact recovery for a bias-bearing dense first layer and batch 1:
/// grad_W = delta x^T and grad_b = delta, so x is grad_W's row with the
/// largest |delta| divided by that delta.
TensorF closed_form_dense_recovery(const TensorF& grad_w, const TensorF& grad_b);

enum class AttackKind { Gradient, Model };

struct AttackReportRow {
  std::size_t image_index = 0;
  double psnr_db = 0.0;
  std::size_t iterations = 0;
  bool failed = false;
};

struct AttackReport {
  std::vector<AttackReportRow> rows;
  double mean_psnr = 0.0;
  double std_psnr = 0.0;
  std::size_t failures = 0;
  std::string csv;  // per-image rows plus the summary row
};

/// Per-image attacks over `count` test images with per-image seeds; failures
/// become NaN rows excluded from the summary. When out_dir is non-empty the
/// recovered tensors are written there in checkpoint framing.
AttackReport attack_report(const ModelGraph& model, const ParamSet& params, const LabeledDataset& test_set,
                           std::size_t count, AttackKind kind, std::size_t encoder_cut, const AttackConfig& cfg,
                           const std::string& out_dir = "");

}  // namespace hfsim
