#include "hfsim/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hfsim/engine.hpp"
#include "hfsim/metrics.hpp"
#include "hfsim/optimizer.hpp"
#include "hfsim/rng.hpp"
#include "hfsim/serialize.hpp"

namespace hfsim {

double total_variation(const TensorF& img) {
  if (img.rank() < 2) throw std::invalid_argument("total_variation: rank must be >= 2");
  std::size_t w = img.shape[img.rank() - 1];
  std::size_t h = img.shape[img.rank() - 2];
  std::size_t planes = img.size() / (h * w);
  double tv = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    const float* base = img.data.data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x + 1 < w; ++x) tv += std::fabs(double(base[y * w + x + 1]) - double(base[y * w + x]));
    }
    for (std::size_t y = 0; y + 1 < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) tv += std::fabs(double(base[(y + 1) * w + x]) - double(base[y * w + x]));
    }
  }
  return tv;
}

TensorF total_variation_subgradient(const TensorF& img) {
  if (img.rank() < 2) throw std::invalid_argument("total_variation: rank must be >= 2");
  std::size_t w = img.shape[img.rank() - 1];
  std::size_t h = img.shape[img.rank() - 2];
  std::size_t planes = img.size() / (h * w);
  TensorF grad = TensorF::zeros(img.shape);
  auto sign = [](float d) -> float { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); };
  for (std::size_t p = 0; p < planes; ++p) {
    const float* base = img.data.data() + p * h * w;
    float* g = grad.data.data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x + 1 < w; ++x) {
        float s = sign(base[y * w + x + 1] - base[y * w + x]);
        g[y * w + x + 1] += s;
        g[y * w + x] -= s;
      }
    }
    for (std::size_t y = 0; y + 1 < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        float s = sign(base[(y + 1) * w + x] - base[y * w + x]);
        g[(y + 1) * w + x] += s;
        g[y * w + x] -= s;
      }
    }
  }
  return grad;
}

double psnr(const TensorF& a, const TensorF& b, double max_value) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("psnr: shape mismatch " + shape_to_string(a.shape) + " vs " + shape_to_string(b.shape));
  }
  if (max_value <= 0.0) throw std::invalid_argument("psnr: max_value must be > 0");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double r = double(a.data[i]) - double(b.data[i]);
    mse += r * r;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

void AttackConfig::validate() const {
  if (alpha < 0.0) throw std::invalid_argument("attack config: alpha must be >= 0");
  if (max_iters == 0) throw std::invalid_argument("attack config: max_iters must be >= 1");
  if (learning_rate <= 0.0f) throw std::invalid_argument("attack config: learning_rate must be > 0");
}

namespace {

TensorF initial_guess(const std::vector<std::size_t>& input_shape, const AttackConfig& cfg) {
  TensorF x = TensorF::zeros(input_shape);
  switch (cfg.init) {
    case AttackInit::Zeros:
      break;
    case AttackInit::Gray:
      for (float& v : x.data) v = 0.5f;
      break;
    case AttackInit::UniformNoise: {
      Rng rng(seed_mix(cfg.seed, 0xa77cULL));
      for (float& v : x.data) v = rng.next_uniform();
      break;
    }
  }
  return x;
}

// Shared optimization loop: callers supply objective + gradient at a point.
template <typename Eval>
ReconstructionResult optimize_dummy_input(const std::vector<std::size_t>& input_shape, const AttackConfig& cfg,
                                          Eval&& eval) {
  cfg.validate();
  TensorF x = initial_guess(input_shape, cfg);
  OptimizerState opt = OptimizerState::adaptive(cfg.learning_rate);

  ReconstructionResult result;
  result.recovered = x;
  result.best_objective = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    TensorF grad;
    double objective = eval(x, grad);
    if (objective < result.best_objective) {
      result.best_objective = objective;
      result.best_iteration = it;
      result.recovered = x;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.objective_trace.push_back(result.best_objective);
    ++result.iterations_run;
    if (cfg.stall_iters > 0 && since_best >= cfg.stall_iters) break;

    ParamSet wrap, gwrap;
    wrap.add("x", std::move(x));
    gwrap.add("x", std::move(grad));
    optimizer_step(opt, wrap, gwrap);
    x = std::move(wrap.at("x"));
    for (float& v : x.data) v = std::clamp(v, 0.0f, 1.0f);
  }
  return result;
}

double flat_dot(const ParamSet& a, const ParamSet& b) {
  double acc = 0.0;
  for (std::size_t e = 0; e < a.entries().size(); ++e) {
    const auto& ad = a.entries()[e].second.data;
    const auto& bd = b.entries()[e].second.data;
    for (std::size_t j = 0; j < ad.size(); ++j) acc += double(ad[j]) * double(bd[j]);
  }
  return acc;
}

double flat_norm(const ParamSet& a) { return std::sqrt(flat_dot(a, a)); }

}  // namespace

ReconstructionResult gradient_inversion(const ModelGraph& model, const ParamSet& params, const ParamSet& shared_grads,
                                        const std::vector<std::size_t>& input_shape, const TensorF& true_targets,
                                        const AttackConfig& cfg, bool label_known) {
  if (!params.compatible_with(shared_grads)) {
    throw std::invalid_argument("gradient_inversion: shared gradients incompatible with model params");
  }
  double target_norm = flat_norm(shared_grads);
  if (target_norm == 0.0) throw std::invalid_argument("gradient_inversion: zero-norm shared gradient");

  TensorF targets = true_targets;
  if (!label_known) {
    targets = model.loss_kind == LossKind::CrossEntropy ? TensorF::zeros({input_shape[0]})
                                                        : TensorF::zeros({input_shape[0], 1});
  }

  auto eval = [&](const TensorF& x, TensorF& grad) -> double {
    LossGrad lg = loss_and_grad(model, params, x, targets);
    double dummy_norm = flat_norm(lg.grads);
    double cosine = 0.0;
    ParamSet weights = shared_grads.zeros_like();
    bool degenerate = dummy_norm < 1e-20;
    if (!degenerate) {
      double dot = flat_dot(lg.grads, shared_grads);
      cosine = dot / (dummy_norm * target_norm);
      // d(cos)/d(g_dummy), the direction for the mixed-derivative probe
      double inv = 1.0 / (dummy_norm * target_norm);
      double scale = dot / (dummy_norm * dummy_norm * dummy_norm * target_norm);
      for (std::size_t e = 0; e < weights.entries().size(); ++e) {
        auto& w = weights.entries()[e].second.data;
        const auto& t = shared_grads.entries()[e].second.data;
        const auto& g = lg.grads.entries()[e].second.data;
        for (std::size_t j = 0; j < w.size(); ++j) {
          w[j] = static_cast<float>(double(t[j]) * inv - double(g[j]) * scale);
        }
      }
    }
    double objective = (1.0 - cosine) + cfg.alpha * total_variation(x);

    grad = TensorF::zeros(x.shape);
    if (!degenerate) {
      // d/dx <w, grad_theta L(theta; x)> by central differences along w
      double wnorm = flat_norm(weights);
      if (wnorm > 0.0) {
        double eps = 1e-3 / wnorm;
        ParamSet plus = params, minus = params;
        plus.axpy(static_cast<float>(eps), weights);
        minus.axpy(static_cast<float>(-eps), weights);
        TensorF gp, gm;
        loss_and_grad_with_input(model, plus, x, targets, gp);
        loss_and_grad_with_input(model, minus, x, targets, gm);
        for (std::size_t j = 0; j < grad.size(); ++j) {
          double hvp = (double(gp.data[j]) - double(gm.data[j])) / (2.0 * eps);
          grad.data[j] = static_cast<float>(-hvp);  // objective has 1 - cos
        }
      }
    }
    if (cfg.alpha > 0.0) {
      TensorF tv_grad = total_variation_subgradient(x);
      for (std::size_t j = 0; j < grad.size(); ++j) {
        grad.data[j] += static_cast<float>(cfg.alpha) * tv_grad.data[j];
      }
    }
    return objective;
  };

  return optimize_dummy_input(input_shape, cfg, eval);
}

ReconstructionResult model_inversion(const ModelGraph& encoder, const ParamSet& encoder_params,
                                     const TensorF& shared_latent, const std::vector<std::size_t>& input_shape,
                                     const AttackConfig& cfg) {
  auto eval = [&](const TensorF& x, TensorF& grad) -> double {
    ForwardTrace trace;
    TensorF latent = encoder.layers.empty() ? x : forward_traced(encoder, encoder_params, x, trace);
    if (!latent.same_shape(shared_latent)) {
      throw std::invalid_argument("model_inversion: encoder output shape " + shape_to_string(latent.shape) +
                                  " does not match shared latent " + shape_to_string(shared_latent.shape));
    }
    double objective = 0.0;
    TensorF d_latent = TensorF::zeros(latent.shape);
    for (std::size_t j = 0; j < latent.size(); ++j) {
      double r = double(latent.data[j]) - double(shared_latent.data[j]);
      objective += r * r;
      d_latent.data[j] = static_cast<float>(2.0 * r);
    }
    if (encoder.layers.empty()) {
      grad = std::move(d_latent);
    } else {
      graph_backward(encoder, encoder_params, trace, d_latent, nullptr, &grad);
    }
    objective += cfg.alpha * total_variation(x);
    if (cfg.alpha > 0.0) {
      TensorF tv_grad = total_variation_subgradient(x);
      for (std::size_t j = 0; j < grad.size(); ++j) {
        grad.data[j] += static_cast<float>(cfg.alpha) * tv_grad.data[j];
      }
    }
    return objective;
  };

  return optimize_dummy_input(input_shape, cfg, eval);
}

TensorF closed_form_dense_recovery(const TensorF& grad_w, const TensorF& grad_b) {
  if (grad_w.rank() != 2 || grad_b.rank() != 1 || grad_w.shape[0] != grad_b.shape[0]) {
    throw std::invalid_argument("closed_form_dense_recovery: expected grad_w (O,I) and grad_b (O)");
  }
  std::size_t best = 0;
  float best_abs = 0.0f;
  for (std::size_t i = 0; i < grad_b.size(); ++i) {
    float a = std::fabs(grad_b.data[i]);
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  if (best_abs <= 1e-12f) throw std::invalid_argument("closed_form_dense_recovery: all bias gradients are zero");
  std::size_t in = grad_w.shape[1];
  TensorF x = TensorF::zeros({in});
  for (std::size_t j = 0; j < in; ++j) x.data[j] = grad_w.data[best * in + j] / grad_b.data[best];
  return x;
}

AttackReport attack_report(const ModelGraph& model, const ParamSet& params, const LabeledDataset& test_set,
                           std::size_t count, AttackKind kind, std::size_t encoder_cut, const AttackConfig& cfg,
                           const std::string& out_dir) {
  if (count == 0) throw std::invalid_argument("attack_report: count must be >= 1");
  if (count > test_set.size()) throw std::invalid_argument("attack_report: count exceeds test set size");
  cfg.validate();

  // seeded image selection without replacement
  std::vector<std::size_t> pool(test_set.size());
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(seed_mix(cfg.seed, 0x5e1ec7ULL));
  rng.shuffle(pool);
  pool.resize(count);

  ModelGraph encoder;
  ParamSet encoder_params;
  if (kind == AttackKind::Model) {
    if (encoder_cut > 0) {
      CutSplit split = split_at_cut_layer(model, encoder_cut);
      auto [head, tail] = split_params(model, params, encoder_cut);
      encoder = split.head;
      encoder_params = head;
    }
    // encoder_cut == 0 leaves an empty graph: the identity encoder
  }

  AttackReport report;
  std::ostringstream csv;
  csv << "image_index,psnr_db,iterations,best_objective\n";
  std::vector<double> psnrs;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t image_index = pool[i];
    auto [image, target] = test_set.gather({image_index});
    AttackConfig per_image = cfg;
    per_image.seed = seed_mix(cfg.seed, 0x1a6eULL, image_index);
    AttackReportRow row;
    row.image_index = image_index;
    try {
      ReconstructionResult rec;
      if (kind == AttackKind::Gradient) {
        LossGrad shared = loss_and_grad(model, params, image, target);
        rec = gradient_inversion(model, params, shared.grads, image.shape, target, per_image, true);
      } else {
        TensorF latent = encoder.layers.empty() ? image : forward(encoder, encoder_params, image);
        rec = model_inversion(encoder, encoder_params, latent, image.shape, per_image);
      }
      rec.psnr_db = psnr(rec.recovered, image, 1.0);
      row.psnr_db = rec.psnr_db;
      row.iterations = rec.iterations_run;
      psnrs.push_back(rec.psnr_db);
      if (!out_dir.empty()) {
        ParamSet dump;
        dump.add("recovered", rec.recovered);
        save_params(dump, (std::filesystem::path(out_dir) / ("recovered_" + std::to_string(image_index) + ".hfsm"))
                              .string());
      }
      csv << image_index << ',';
      if (std::isinf(rec.psnr_db)) {
        csv << "inf";
      } else {
        csv << rec.psnr_db;
      }
      csv << ',' << rec.iterations_run << ',' << rec.best_objective << "\n";
    } catch (const std::exception&) {
      row.failed = true;
      ++report.failures;
      csv << image_index << ",nan,0,nan\n";
    }
    report.rows.push_back(row);
  }
  if (!psnrs.empty()) {
    RunSummary summary = aggregate_runs(psnrs);
    report.mean_psnr = summary.mean;
    report.std_psnr = summary.stddev;
  }
  csv << "summary,mean=" << report.mean_psnr << ",std=" << report.std_psnr << ",failures=" << report.failures << "\n";
  report.csv = csv.str();
  return report;
}

}  // namespace hfsim
