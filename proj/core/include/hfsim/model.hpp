#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hfsim/param_set.hpp"
#include "hfsim/tensor.hpp"

namespace hfsim {

enum class LayerKind { Dense, Conv2d, Relu, MaxPool2d, AvgPool2d, Flatten };

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  // dense
  std::size_t in_features = 0, out_features = 0;
  // conv2d
  std::size_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1, padding = 0;
  // pooling
  std::size_t window = 0, pool_stride = 0;

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride = 1,
                          std::size_t padding = 0);
  static LayerSpec relu();
  static LayerSpec max_pool(std::size_t window, std::size_t stride);
  static LayerSpec avg_pool(std::size_t window, std::size_t stride);
  static LayerSpec flatten();

  bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
  bool operator==(const LayerSpec&) const = default;
};

std::string layer_kind_name(LayerKind kind);

enum class LossKind { CrossEntropy, Mse, Mae };
enum class OutputKind { ClassLogits, ScalarRegression };

/// Feed-forward layer stack plus its training objective. A graph with zero
/// layers is the identity function.
struct ModelGraph {
  std::vector<LayerSpec> layers;
  LossKind loss_kind = LossKind::CrossEntropy;
  OutputKind output_kind = OutputKind::ClassLogits;

  bool operator==(const ModelGraph&) const = default;
};

/// Per-sample output shape for a per-sample input shape (no batch dim).
/// Throws a descriptive error naming the first layer that does not compose.
std::vector<std::size_t> infer_output_shape(const ModelGraph& model, std::vector<std::size_t> input_shape);

/// Parameter names are "layer<i>.weight" / "layer<i>.bias" with the layer's
/// position in the graph. Weights are uniform U(-a, a) with a = 1/sqrt(fan_in),
/// biases zero; fully determined by the seed.
ParamSet init_params(const ModelGraph& model, std::uint64_t seed);

/// head = layers[0..cut_index), tail = layers[cut_index..). Composing head
/// then tail reproduces the original function exactly. Parameter names in both
/// parts are re-based to start at layer0.
struct CutSplit {
  ModelGraph head;
  ModelGraph tail;
  std::size_t cut_index = 0;
};

CutSplit split_at_cut_layer(const ModelGraph& model, std::size_t cut_index);

/// Split a full model's ParamSet into (head, tail) sets matching a CutSplit.
std::pair<ParamSet, ParamSet> split_params(const ModelGraph& model, const ParamSet& params, std::size_t cut_index);

}  // namespace hfsim
