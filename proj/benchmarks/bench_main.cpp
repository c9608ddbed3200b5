#include <benchmark/benchmark.h>

#include "hfsim/autoencoder.hpp"
#include "hfsim/codebook.hpp"
#include "hfsim/dataset.hpp"
#include "hfsim/engine.hpp"
#include "hfsim/model.hpp"
#include "hfsim/partition.hpp"
#include "hfsim/rng.hpp"

using namespace hfsim;

namespace {

ModelGraph bench_model() {
  ModelGraph model;
  model.layers = {LayerSpec::conv2d(1, 6, 3, 1, 1), LayerSpec::relu(), LayerSpec::max_pool(2, 2),
                  LayerSpec::flatten(), LayerSpec::dense(6 * 8 * 8, 32), LayerSpec::relu(), LayerSpec::dense(32, 2)};
  return model;
}

TensorF bench_batch(std::size_t n) {
  TensorF x = TensorF::zeros({n, 1, 16, 16});
  Rng rng(1);
  for (float& v : x.data) v = rng.next_uniform();
  return x;
}

TensorF bench_targets(std::size_t n) {
  TensorF t = TensorF::zeros({n});
  Rng rng(2);
  for (float& v : t.data) v = static_cast<float>(rng.next_below(2));
  return t;
}

void BM_Forward(benchmark::State& state) {
  ModelGraph model = bench_model();
  ParamSet params = init_params(model, 3);
  TensorF x = bench_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    TensorF y = forward(model, params, x);
    benchmark::DoNotOptimize(y);
  }
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(16)->Arg(64);

void BM_LossAndGrad(benchmark::State& state) {
  ModelGraph model = bench_model();
  ParamSet params = init_params(model, 3);
  std::size_t n = static_cast<std::size_t>(state.range(0));
  TensorF x = bench_batch(n);
  TensorF t = bench_targets(n);
  for (auto _ : state) {
    LossGrad lg = loss_and_grad(model, params, x, t);
    benchmark::DoNotOptimize(lg.loss);
  }
}
BENCHMARK(BM_LossAndGrad)->Arg(1)->Arg(16);

void BM_QuantizeNearest(benchmark::State& state) {
  Codebook cb = Codebook::random(static_cast<std::size_t>(state.range(0)), 8, 4);
  TensorF h = TensorF::zeros({16, 4, 4, 8});
  Rng rng(5);
  for (float& v : h.data) v = rng.next_uniform(-1.0f, 1.0f);
  for (auto _ : state) {
    QuantizeResult q = quantize_nearest(h, cb);
    benchmark::DoNotOptimize(q.indices.indices.data());
  }
}
BENCHMARK(BM_QuantizeNearest)->Arg(16)->Arg(64)->Arg(256);

void BM_GeneratorStep(benchmark::State& state) {
  QuantizedAutoencoder ae = make_autoencoder({1, 16, 16}, 32, 8, 6);
  OptimizerState opt = OptimizerState::adaptive(1e-3f);
  TensorF x = bench_batch(16);
  for (auto _ : state) {
    GeneratorLoss loss = generator_loss_and_step(ae, x, opt, 0.25f);
    benchmark::DoNotOptimize(loss.total);
  }
}
BENCHMARK(BM_GeneratorStep);

void BM_KsSkewness(benchmark::State& state) {
  SyntheticSpec spec;
  spec.samples_per_class = static_cast<std::size_t>(state.range(0)) / 2;
  spec.image_size = 8;
  LabeledDataset ds = make_synthetic_dataset(spec, 7);
  PartitionPlan plan = partition_iid(ds, 4, 7);
  for (auto _ : state) {
    double ks = ks_skewness(ds, plan);
    benchmark::DoNotOptimize(ks);
  }
}
BENCHMARK(BM_KsSkewness)->Arg(512)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();
