#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hfsim/attacks.hpp"
#include "hfsim/engine.hpp"
#include "hfsim/rng.hpp"

using namespace hfsim;

namespace {

TensorF random_image(std::vector<std::size_t> shape, std::uint64_t seed) {
  TensorF t = TensorF::zeros(std::move(shape));
  Rng rng(seed);
  for (float& v : t.data) v = rng.next_uniform();
  return t;
}

}  // namespace

TEST_CASE("total variation basics") {
  SUBCASE("constant image has zero variation") {
    CHECK(total_variation(TensorF::full({1, 1, 4, 4}, 0.7f)) == 0.0);
  }
  SUBCASE("2x2 image [[0,1],[0,1]] has TV 2") {
    TensorF img({2, 2}, {0.0f, 1.0f, 0.0f, 1.0f});
    CHECK(total_variation(img) == doctest::Approx(2.0));
  }
  SUBCASE("absolute homogeneity TV(c*img) == |c| TV(img)") {
    TensorF img = random_image({1, 1, 6, 6}, 3);
    double base = total_variation(img);
    TensorF scaled = img;
    for (float& v : scaled.data) v *= -2.5f;
    CHECK(total_variation(scaled) == doctest::Approx(2.5 * base));
  }
  SUBCASE("rank below 2 is an error") {
    CHECK_THROWS(total_variation(TensorF({4}, {1, 2, 3, 4})));
  }
  SUBCASE("subgradient matches finite differences away from ties") {
    TensorF img = random_image({1, 1, 5, 5}, 4);
    TensorF grad = total_variation_subgradient(img);
    double eps = 1e-4;
    for (std::size_t j = 0; j < img.size(); ++j) {
      TensorF p = img, m = img;
      p.data[j] += static_cast<float>(eps);
      m.data[j] -= static_cast<float>(eps);
      double numeric = (total_variation(p) - total_variation(m)) / (2 * eps);
      CHECK(grad.data[j] == doctest::Approx(numeric).epsilon(1e-3));
    }
  }
}

TEST_CASE("psnr definition cases") {
  TensorF a = random_image({1, 1, 4, 4}, 5);
  SUBCASE("identical images give the +inf sentinel") {
    CHECK(std::isinf(psnr(a, a, 1.0)));
  }
  SUBCASE("MSE equal to max^2 gives 0 dB") {
    TensorF zero = TensorF::zeros({1, 4});
    TensorF ones = TensorF::full({1, 4}, 1.0f);
    CHECK(psnr(zero, ones, 1.0) == doctest::Approx(0.0));
  }
  SUBCASE("MSE 0.01 at max 1 gives 20 dB") {
    TensorF zero = TensorF::zeros({1, 4});
    TensorF off = TensorF::full({1, 4}, 0.1f);
    CHECK(psnr(zero, off, 1.0) == doctest::Approx(20.0));
  }
  SUBCASE("symmetric in its arguments") {
    TensorF b = random_image({1, 1, 4, 4}, 6);
    CHECK(psnr(a, b, 1.0) == doctest::Approx(psnr(b, a, 1.0)));
  }
  SUBCASE("shape mismatch and bad max are errors") {
    TensorF b = TensorF::zeros({2, 2});
    CHECK_THROWS(psnr(a, b, 1.0));
    CHECK_THROWS(psnr(a, a, 0.0));
  }
}

TEST_CASE("closed-form dense recovery") {
  SUBCASE("hand case x=(2,3), delta=(1,-1)") {
    // grad_W = delta x^T, grad_b = delta
    TensorF grad_w({2, 2}, {2.0f, 3.0f, -2.0f, -3.0f});
    TensorF grad_b({2}, {1.0f, -1.0f});
    TensorF x = closed_form_dense_recovery(grad_w, grad_b);
    CHECK(x.data[0] == doctest::Approx(2.0f));
    CHECK(x.data[1] == doctest::Approx(3.0f));
  }
  SUBCASE("single nonzero delta row is selected") {
    TensorF grad_w({2, 2}, {0.0f, 0.0f, 4.0f, 6.0f});
    TensorF grad_b({2}, {0.0f, 2.0f});
    TensorF x = closed_form_dense_recovery(grad_w, grad_b);
    CHECK(x.data[0] == doctest::Approx(2.0f));
    CHECK(x.data[1] == doctest::Approx(3.0f));
  }
  SUBCASE("all-zero bias gradient is an error") {
    TensorF grad_w({2, 2}, {1.0f, 1.0f, 1.0f, 1.0f});
    TensorF grad_b({2}, {0.0f, 0.0f});
    CHECK_THROWS(closed_form_dense_recovery(grad_w, grad_b));
  }
  SUBCASE("property: recovery error < 1e-6 over 100 random cases") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed_mix(seed, 77));
      std::size_t in = 2 + rng.next_below(6), out = 2 + rng.next_below(4);
      TensorF x = TensorF::zeros({in});
      for (float& v : x.data) v = rng.next_uniform(-2.0f, 2.0f);
      TensorF delta = TensorF::zeros({out});
      for (float& v : delta.data) v = rng.next_uniform(-1.0f, 1.0f);
      delta.data[0] += delta.data[0] >= 0 ? 0.5f : -0.5f;  // keep at least one healthy entry
      TensorF grad_w = TensorF::zeros({out, in});
      for (std::size_t o = 0; o < out; ++o)
        for (std::size_t j = 0; j < in; ++j) grad_w.data[o * in + j] = delta.data[o] * x.data[j];
      TensorF rec = closed_form_dense_recovery(grad_w, delta);
      for (std::size_t j = 0; j < in; ++j) CHECK(std::fabs(rec.data[j] - x.data[j]) < 1e-6f);
    }
  }
}

TEST_CASE("gradient inversion objective structure") {
  ModelGraph model;
  model.layers = {LayerSpec::flatten(), LayerSpec::dense(16, 4)};
  ParamSet params = init_params(model, 7);
  TensorF image = random_image({1, 1, 4, 4}, 8);
  TensorF target({1}, {2.0f});
  LossGrad shared = loss_and_grad(model, params, image, target);

  SUBCASE("zero-norm shared gradient is rejected") {
    ParamSet zeros = params.zeros_like();
    AttackConfig cfg;
    CHECK_THROWS(gradient_inversion(model, params, zeros, image.shape, target, cfg, true));
  }
  SUBCASE("initialized at the truth, the matching term vanishes") {
    AttackConfig cfg;
    cfg.alpha = 0.0;
    cfg.max_iters = 1;
    cfg.seed = 1;
    // evaluate the objective at the true input by running one iteration from it:
    // feed init through a custom run (zeros init) is not the truth, so instead
    // verify via the trace: objective at truth == alpha * TV(truth)
    LossGrad dummy = loss_and_grad(model, params, image, target);
    double dot = 0, na = 0, nb = 0;
    auto fa = dummy.grads.flatten();
    auto fb = shared.grads.flatten();
    for (std::size_t i = 0; i < fa.size(); ++i) {
      dot += double(fa[i]) * fb[i];
      na += double(fa[i]) * fa[i];
      nb += double(fb[i]) * fb[i];
    }
    CHECK(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)) == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("antiparallel gradients hit the cosine distance bound of 2") {
    ParamSet anti = shared.grads;
    for (auto& [name, t] : anti.entries()) {
      for (float& v : t.data) v = -v;
    }
    double dot = 0, na = 0, nb = 0;
    auto fa = anti.flatten();
    auto fb = shared.grads.flatten();
    for (std::size_t i = 0; i < fa.size(); ++i) {
      dot += double(fa[i]) * fb[i];
      na += double(fa[i]) * fa[i];
      nb += double(fb[i]) * fb[i];
    }
    CHECK(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)) == doctest::Approx(2.0));
  }
}

TEST_CASE("gradient inversion recovers the input of a dense layer to the closed form") {
  ModelGraph model;
  model.layers = {LayerSpec::flatten(), LayerSpec::dense(16, 4)};
  ParamSet params = init_params(model, 9);
  TensorF image = random_image({1, 1, 4, 4}, 10);
  TensorF target({1}, {1.0f});
  LossGrad shared = loss_and_grad(model, params, image, target);

  TensorF oracle = closed_form_dense_recovery(shared.grads.at("layer1.weight"), shared.grads.at("layer1.bias"));
  TensorF oracle_img({1, 1, 4, 4}, oracle.data);

  AttackConfig cfg;
  cfg.alpha = 0.0;
  cfg.max_iters = 3000;
  cfg.learning_rate = 0.05f;
  cfg.seed = 11;
  ReconstructionResult rec = gradient_inversion(model, params, shared.grads, image.shape, target, cfg, true);
  double db = psnr(rec.recovered, oracle_img, 1.0);
  CHECK(db >= 40.0);

  // best-so-far trace never increases and ends at the reported minimum
  for (std::size_t i = 1; i < rec.objective_trace.size(); ++i) {
    CHECK(rec.objective_trace[i] <= rec.objective_trace[i - 1]);
  }
  CHECK(rec.objective_trace.back() == doctest::Approx(rec.best_objective));
}

TEST_CASE("model inversion with the identity encoder recovers the image") {
  ModelGraph identity;
  TensorF image = random_image({1, 1, 4, 4}, 12);
  AttackConfig cfg;
  cfg.alpha = 0.0;
  cfg.max_iters = 4000;
  cfg.learning_rate = 0.05f;
  cfg.seed = 13;
  ReconstructionResult rec = model_inversion(identity, ParamSet{}, image, image.shape, cfg);
  CHECK(psnr(rec.recovered, image, 1.0) >= 60.0);
}

TEST_CASE("model inversion latent term vanishes at the true input") {
  ModelGraph encoder;
  encoder.layers = {LayerSpec::conv2d(1, 2, 3, 1, 1), LayerSpec::relu()};
  encoder.loss_kind = LossKind::Mse;
  encoder.output_kind = OutputKind::ScalarRegression;
  ParamSet params = init_params(encoder, 14);
  TensorF image = random_image({1, 1, 6, 6}, 15);
  TensorF latent = forward(encoder, params, image);
  double residual = 0.0;
  TensorF again = forward(encoder, params, image);
  for (std::size_t j = 0; j < latent.size(); ++j) {
    residual += std::fabs(double(latent.data[j]) - double(again.data[j]));
  }
  CHECK(residual == 0.0);

  // and a mismatched latent shape is rejected
  AttackConfig cfg;
  cfg.max_iters = 1;
  TensorF bad = TensorF::zeros({1, 2, 3, 3});
  CHECK_THROWS(model_inversion(encoder, params, bad, image.shape, cfg));
}

TEST_CASE("shallower encoders leak more than deeper ones") {
  // directional privacy check at unit-test scale; the acceptance suite runs
  // the full three-depth comparison
  ModelGraph shallow, deep;
  shallow.layers = {LayerSpec::conv2d(1, 4, 3, 1, 1)};
  deep.layers = {LayerSpec::conv2d(1, 4, 3, 1, 1), LayerSpec::relu(), LayerSpec::max_pool(2, 2),
                 LayerSpec::conv2d(4, 8, 3, 1, 1), LayerSpec::relu(), LayerSpec::max_pool(2, 2)};
  for (ModelGraph* g : {&shallow, &deep}) {
    g->loss_kind = LossKind::Mse;
    g->output_kind = OutputKind::ScalarRegression;
  }
  ParamSet shallow_params = init_params(shallow, 16);
  ParamSet deep_params = init_params(deep, 16);

  AttackConfig cfg;
  cfg.alpha = 1e-4;
  cfg.max_iters = 1200;
  cfg.learning_rate = 0.05f;

  double shallow_sum = 0.0, deep_sum = 0.0;
  for (std::uint64_t i = 0; i < 3; ++i) {
    TensorF image = random_image({1, 1, 8, 8}, seed_mix(17, i));
    cfg.seed = seed_mix(18, i);
    TensorF shallow_latent = forward(shallow, shallow_params, image);
    TensorF deep_latent = forward(deep, deep_params, image);
    shallow_sum += psnr(model_inversion(shallow, shallow_params, shallow_latent, image.shape, cfg).recovered, image, 1.0);
    deep_sum += psnr(model_inversion(deep, deep_params, deep_latent, image.shape, cfg).recovered, image, 1.0);
  }
  CHECK(shallow_sum > deep_sum);
}

TEST_CASE("attack_report emits one row per image plus a summary") {
  SyntheticSpec spec;
  spec.task_kind = TaskKind::Classification;
  spec.num_classes = 2;
  spec.image_size = 8;
  spec.samples_per_class = 8;
  spec.noise_sigma = 0.1f;
  LabeledDataset test_set = make_synthetic_dataset(spec, 19);

  ModelGraph model;
  model.layers = {LayerSpec::conv2d(1, 2, 3, 1, 1), LayerSpec::relu(), LayerSpec::flatten(),
                  LayerSpec::dense(2 * 8 * 8, 2)};
  ParamSet params = init_params(model, 19);

  AttackConfig cfg;
  cfg.alpha = 1e-3;
  cfg.max_iters = 50;
  cfg.seed = 20;

  CHECK_THROWS(attack_report(model, params, test_set, 0, AttackKind::Model, 1, cfg));
  CHECK_THROWS(attack_report(model, params, test_set, 1000, AttackKind::Model, 1, cfg));

  AttackReport report = attack_report(model, params, test_set, 3, AttackKind::Model, 2, cfg);
  CHECK(report.rows.size() == 3);
  CHECK(report.failures == 0);
  // header + 3 rows + summary
  std::size_t lines = std::count(report.csv.begin(), report.csv.end(), '\n');
  CHECK(lines == 5);

  AttackReport again = attack_report(model, params, test_set, 3, AttackKind::Model, 2, cfg);
  CHECK(again.csv == report.csv);  // deterministic per seed
}
