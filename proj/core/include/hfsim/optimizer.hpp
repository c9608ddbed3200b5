#pragma once

#include <cstddef>

#include "hfsim/param_set.hpp"

namespace hfsim {

enum class OptimKind { Sgd, SgdMomentum, Adaptive };

/// Step-decay: learning rate divided by `scale` every `interval_epochs`
/// epochs. interval_epochs == 0 disables decay.
struct DecaySchedule {
  std::size_t interval_epochs = 0;
  float scale = 1.0f;
};

struct OptimizerState {
  OptimKind kind = OptimKind::Sgd;
  float learning_rate = 0.01f;
  float momentum = 0.0f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;  // decoupled, applied before the adaptive step
  DecaySchedule decay;
  std::size_t step_count = 0;
  std::size_t epoch = 0;  // drives the decay schedule; set by the trainer
  ParamSet momentum_buf;  // sgd_momentum
  ParamSet first_moment;  // adaptive
  ParamSet second_moment; // adaptive

  static OptimizerState sgd(float lr, DecaySchedule decay = {});
  static OptimizerState sgd_momentum(float lr, float momentum, DecaySchedule decay = {});
  static OptimizerState adaptive(float lr, DecaySchedule decay = {}, float weight_decay = 0.0f);

  float effective_lr() const;
};

/// One update step: mutates state accumulators and params in place.
/// Plain sgd: theta <- theta - lr * g.
void optimizer_step(OptimizerState& state, ParamSet& params, const ParamSet& grads);

}  // namespace hfsim
