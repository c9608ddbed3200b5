#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "hfsim/engine.hpp"
#include "hfsim/model.hpp"
#include "hfsim/rng.hpp"

using namespace hfsim;

namespace {

TensorF random_batch(std::vector<std::size_t> shape, std::uint64_t seed) {
  TensorF t = TensorF::zeros(std::move(shape));
  Rng rng(seed);
  for (float& v : t.data) v = rng.next_uniform(-1.0f, 1.0f);
  return t;
}

// Test-local scalar reference for a dense layer, independent of the engine.
std::vector<double> dense_reference(const TensorF& w, const TensorF& b, const TensorF& x) {
  std::size_t n = x.shape[0], in = x.shape[1], out = b.shape[0];
  std::vector<double> y(n * out, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b.data[o];
      for (std::size_t j = 0; j < in; ++j) acc += double(w.data[o * in + j]) * double(x.data[i * in + j]);
      y[i * out + o] = acc;
    }
  return y;
}

}  // namespace

TEST_CASE("dense layer with identity weights is the identity map") {
  ModelGraph model;
  model.layers = {LayerSpec::dense(3, 3)};
  ParamSet params;
  TensorF w = TensorF::zeros({3, 3});
  for (std::size_t i = 0; i < 3; ++i) w.data[i * 3 + i] = 1.0f;
  params.add("layer0.weight", w);
  params.add("layer0.bias", TensorF::zeros({3}));

  TensorF x({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorF y = forward(model, params, x);
  CHECK(y == x);
}

TEST_CASE("relu clamps negatives to zero") {
  ModelGraph model;
  model.layers = {LayerSpec::relu()};
  TensorF x({1, 2}, {-1.0f, 2.0f});
  TensorF y = forward(model, ParamSet{}, x);
  CHECK(y.data[0] == 0.0f);
  CHECK(y.data[1] == 2.0f);
}

TEST_CASE("two-layer net matches an independent scalar reference on a seed-0 batch") {
  ModelGraph model;
  model.layers = {LayerSpec::dense(4, 3), LayerSpec::relu(), LayerSpec::dense(3, 2)};
  ParamSet params = init_params(model, 0);
  TensorF x = random_batch({2, 4}, 0);

  auto h = dense_reference(params.at("layer0.weight"), params.at("layer0.bias"), x);
  for (double& v : h) v = v > 0.0 ? v : 0.0;
  TensorF hf({2, 3}, std::vector<float>(h.begin(), h.end()));
  auto y_ref = dense_reference(params.at("layer2.weight"), params.at("layer2.bias"), hf);

  TensorF y = forward(model, params, x);
  REQUIRE(y.shape == std::vector<std::size_t>{2, 2});
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data[i] == doctest::Approx(y_ref[i]).epsilon(1e-6));

  // golden values frozen from the reference implementation above
  CHECK(y.data[0] == doctest::Approx(0.00465116).epsilon(1e-4));
  CHECK(y.data[1] == doctest::Approx(-0.0280833).epsilon(1e-4));
}

TEST_CASE("forward is deterministic across repeated runs") {
  ModelGraph model;
  model.layers = {LayerSpec::conv2d(1, 2, 3, 1, 1), LayerSpec::relu(), LayerSpec::max_pool(2, 2),
                  LayerSpec::flatten(), LayerSpec::dense(2 * 4 * 4, 2)};
  ParamSet params = init_params(model, 9);
  TensorF x = random_batch({3, 1, 8, 8}, 9);
  TensorF a = forward(model, params, x);
  TensorF b = forward(model, params, x);
  CHECK(a == b);
}

TEST_CASE("shape mismatch errors name the offending layer") {
  ModelGraph model;
  model.layers = {LayerSpec::dense(4, 3)};
  ParamSet params = init_params(model, 0);
  TensorF x = random_batch({2, 5}, 1);
  CHECK_THROWS_WITH_AS(forward(model, params, x), doctest::Contains("layer0"), std::invalid_argument);
}

TEST_CASE("infer_output_shape composes and rejects bad stacks") {
  ModelGraph model;
  model.layers = {LayerSpec::conv2d(1, 4, 3, 1, 1), LayerSpec::max_pool(2, 2), LayerSpec::flatten(),
                  LayerSpec::dense(4 * 4 * 4, 10)};
  auto out = infer_output_shape(model, {1, 8, 8});
  CHECK(out == std::vector<std::size_t>{10});

  ModelGraph bad;
  bad.layers = {LayerSpec::conv2d(3, 4, 3)};
  CHECK_THROWS(infer_output_shape(bad, {1, 8, 8}));
}

TEST_CASE("split keeps layer lists intact") {
  ModelGraph model;
  model.layers = {LayerSpec::conv2d(1, 2, 3, 1, 1), LayerSpec::relu(), LayerSpec::flatten(),
                  LayerSpec::dense(2 * 6 * 6, 2)};
  CutSplit split = split_at_cut_layer(model, 1);
  CHECK(split.head.layers.size() == 1);
  CHECK(split.tail.layers.size() == 3);
  CHECK(split.head.layers[0].kind == LayerKind::Conv2d);
  CHECK(split.tail.layers[0].kind == LayerKind::Relu);

  CHECK_THROWS(split_at_cut_layer(model, 0));
  CHECK_THROWS(split_at_cut_layer(model, model.layers.size()));
}

TEST_CASE("head-tail composition equals the unsplit forward exactly") {
  ModelGraph model;
  model.layers = {LayerSpec::conv2d(1, 3, 3, 1, 1), LayerSpec::relu(), LayerSpec::avg_pool(2, 2),
                  LayerSpec::flatten(), LayerSpec::dense(3 * 3 * 3, 4), LayerSpec::relu(), LayerSpec::dense(4, 2)};
  ParamSet params = init_params(model, 5);
  for (std::size_t cut = 1; cut < model.layers.size(); ++cut) {
    CutSplit split = split_at_cut_layer(model, cut);
    auto [head_params, tail_params] = split_params(model, params, cut);
    for (std::uint64_t s = 0; s < 100; ++s) {
      TensorF x = random_batch({2, 1, 6, 6}, s);
      TensorF full = forward(model, params, x);
      TensorF composed = forward(split.tail, tail_params, forward(split.head, head_params, x));
      CHECK(full == composed);  // exact float equality
    }
  }
}

TEST_CASE("init_params is deterministic and fan-in scaled") {
  ModelGraph model;
  model.layers = {LayerSpec::dense(16, 4)};
  ParamSet a = init_params(model, 11);
  ParamSet b = init_params(model, 11);
  CHECK(a == b);
  ParamSet c = init_params(model, 12);
  CHECK(param_distance(a, c) > 0.0f);
  float bound = 1.0f / 4.0f;  // 1/sqrt(16)
  for (float v : a.at("layer0.weight").data) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
  }
  for (float v : a.at("layer0.bias").data) CHECK(v == 0.0f);
}
