#include "hfsim/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace hfsim {

OptimizerState OptimizerState::sgd(float lr, DecaySchedule decay) {
  OptimizerState s;
  s.kind = OptimKind::Sgd;
  s.learning_rate = lr;
  s.decay = decay;
  return s;
}

OptimizerState OptimizerState::sgd_momentum(float lr, float momentum, DecaySchedule decay) {
  OptimizerState s;
  s.kind = OptimKind::SgdMomentum;
  s.learning_rate = lr;
  s.momentum = momentum;
  s.decay = decay;
  return s;
}

OptimizerState OptimizerState::adaptive(float lr, DecaySchedule decay, float weight_decay) {
  OptimizerState s;
  s.kind = OptimKind::Adaptive;
  s.learning_rate = lr;
  s.decay = decay;
  s.weight_decay = weight_decay;
  return s;
}

float OptimizerState::effective_lr() const {
  if (decay.interval_epochs == 0 || decay.scale == 1.0f) return learning_rate;
  float lr = learning_rate;
  for (std::size_t i = 0; i < epoch / decay.interval_epochs; ++i) lr /= decay.scale;
  return lr;
}

void optimizer_step(OptimizerState& state, ParamSet& params, const ParamSet& grads) {
  if (!params.compatible_with(grads)) {
    throw std::invalid_argument("optimizer_step: grads incompatible with params");
  }
  if (state.learning_rate <= 0.0f) throw std::invalid_argument("optimizer_step: learning_rate must be > 0");
  float lr = state.effective_lr();
  switch (state.kind) {
    case OptimKind::Sgd: {
      for (std::size_t e = 0; e < params.entries().size(); ++e) {
        auto& p = params.entries()[e].second.data;
        const auto& g = grads.entries()[e].second.data;
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
      }
      break;
    }
    case OptimKind::SgdMomentum: {
      if (state.momentum_buf.empty() && !params.empty()) state.momentum_buf = params.zeros_like();
      for (std::size_t e = 0; e < params.entries().size(); ++e) {
        auto& p = params.entries()[e].second.data;
        auto& buf = state.momentum_buf.entries()[e].second.data;
        const auto& g = grads.entries()[e].second.data;
        for (std::size_t j = 0; j < p.size(); ++j) {
          buf[j] = state.momentum * buf[j] + g[j];
          p[j] -= lr * buf[j];
        }
      }
      break;
    }
    case OptimKind::Adaptive: {
      if (state.first_moment.empty() && !params.empty()) {
        state.first_moment = params.zeros_like();
        state.second_moment = params.zeros_like();
      }
      double t = static_cast<double>(state.step_count + 1);
      double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), t);
      double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), t);
      for (std::size_t e = 0; e < params.entries().size(); ++e) {
        auto& p = params.entries()[e].second.data;
        auto& m = state.first_moment.entries()[e].second.data;
        auto& v = state.second_moment.entries()[e].second.data;
        const auto& g = grads.entries()[e].second.data;
        for (std::size_t j = 0; j < p.size(); ++j) {
          if (state.weight_decay != 0.0f) p[j] -= lr * state.weight_decay * p[j];
          m[j] = state.beta1 * m[j] + (1.0f - state.beta1) * g[j];
          v[j] = state.beta2 * v[j] + (1.0f - state.beta2) * g[j] * g[j];
          double mh = m[j] / bc1;
          double vh = v[j] / bc2;
          p[j] -= static_cast<float>(lr * mh / (std::sqrt(vh) + state.eps));
        }
      }
      break;
    }
  }
  ++state.step_count;
}

}  // namespace hfsim
