#include "hfsim/model.hpp"

#include <cmath>
#include <stdexcept>

#include "hfsim/rng.hpp"

namespace hfsim {

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::Relu;
  return s;
}

LayerSpec LayerSpec::max_pool(std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool2d;
  s.window = window;
  s.pool_stride = stride;
  return s;
}

LayerSpec LayerSpec::avg_pool(std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::AvgPool2d;
  s.window = window;
  s.pool_stride = stride;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  return s;
}

std::string layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2d: return "max_pool";
    case LayerKind::AvgPool2d: return "avg_pool";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(std::size_t layer_index, const LayerSpec& layer, const std::vector<std::size_t>& in) {
  throw std::invalid_argument("layer" + std::to_string(layer_index) + " (" + layer_kind_name(layer.kind) +
                              "): input shape " + shape_to_string(in) + " does not compose");
}

std::size_t pooled_extent(std::size_t extent, std::size_t window, std::size_t stride) {
  if (extent < window) return 0;
  return (extent - window) / stride + 1;
}

}  // namespace

std::vector<std::size_t> infer_output_shape(const ModelGraph& model, std::vector<std::size_t> shape) {
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& layer = model.layers[i];
    switch (layer.kind) {
      case LayerKind::Dense:
        if (shape.size() != 1 || shape[0] != layer.in_features) shape_error(i, layer, shape);
        shape = {layer.out_features};
        break;
      case LayerKind::Conv2d: {
        if (shape.size() != 3 || shape[0] != layer.in_channels) shape_error(i, layer, shape);
        std::size_t h = shape[1] + 2 * layer.padding;
        std::size_t w = shape[2] + 2 * layer.padding;
        if (h < layer.kernel || w < layer.kernel || layer.stride == 0) shape_error(i, layer, shape);
        shape = {layer.out_channels, (h - layer.kernel) / layer.stride + 1, (w - layer.kernel) / layer.stride + 1};
        break;
      }
      case LayerKind::Relu:
        break;
      case LayerKind::MaxPool2d:
      case LayerKind::AvgPool2d: {
        if (shape.size() != 3 || layer.pool_stride == 0) shape_error(i, layer, shape);
        std::size_t h = pooled_extent(shape[1], layer.window, layer.pool_stride);
        std::size_t w = pooled_extent(shape[2], layer.window, layer.pool_stride);
        if (h == 0 || w == 0) shape_error(i, layer, shape);
        shape = {shape[0], h, w};
        break;
      }
      case LayerKind::Flatten:
        shape = {shape_product(shape)};
        break;
    }
  }
  return shape;
}

ParamSet init_params(const ModelGraph& model, std::uint64_t seed) {
  ParamSet params;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& layer = model.layers[i];
    if (!layer.has_params()) continue;
    Rng rng(seed_mix(seed, 0x1a7e5ULL, i));
    std::string prefix = "layer" + std::to_string(i);
    if (layer.kind == LayerKind::Dense) {
      float a = 1.0f / std::sqrt(static_cast<float>(layer.in_features));
      TensorF w = TensorF::zeros({layer.out_features, layer.in_features});
      for (float& v : w.data) v = rng.next_uniform(-a, a);
      params.add(prefix + ".weight", std::move(w));
      params.add(prefix + ".bias", TensorF::zeros({layer.out_features}));
    } else {
      std::size_t fan_in = layer.in_channels * layer.kernel * layer.kernel;
      float a = 1.0f / std::sqrt(static_cast<float>(fan_in));
      TensorF w = TensorF::zeros({layer.out_channels, layer.in_channels, layer.kernel, layer.kernel});
      for (float& v : w.data) v = rng.next_uniform(-a, a);
      params.add(prefix + ".weight", std::move(w));
      params.add(prefix + ".bias", TensorF::zeros({layer.out_channels}));
    }
  }
  return params;
}

CutSplit split_at_cut_layer(const ModelGraph& model, std::size_t cut_index) {
  if (cut_index == 0 || cut_index >= model.layers.size()) {
    throw std::invalid_argument("split_at_cut_layer: cut_index " + std::to_string(cut_index) +
                                " out of range (0, " + std::to_string(model.layers.size()) + ")");
  }
  CutSplit split;
  split.cut_index = cut_index;
  split.head.layers.assign(model.layers.begin(), model.layers.begin() + static_cast<std::ptrdiff_t>(cut_index));
  split.head.loss_kind = model.loss_kind;
  split.head.output_kind = model.output_kind;
  split.tail.layers.assign(model.layers.begin() + static_cast<std::ptrdiff_t>(cut_index), model.layers.end());
  split.tail.loss_kind = model.loss_kind;
  split.tail.output_kind = model.output_kind;
  return split;
}

std::pair<ParamSet, ParamSet> split_params(const ModelGraph& model, const ParamSet& params, std::size_t cut_index) {
  if (cut_index == 0 || cut_index >= model.layers.size()) {
    throw std::invalid_argument("split_params: cut_index out of range");
  }
  ParamSet head, tail;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (!model.layers[i].has_params()) continue;
    std::string old_prefix = "layer" + std::to_string(i);
    bool in_head = i < cut_index;
    std::size_t new_index = in_head ? i : i - cut_index;
    std::string new_prefix = "layer" + std::to_string(new_index);
    ParamSet& dst = in_head ? head : tail;
    dst.add(new_prefix + ".weight", params.at(old_prefix + ".weight"));
    dst.add(new_prefix + ".bias", params.at(old_prefix + ".bias"));
  }
  return {std::move(head), std::move(tail)};
}

}  // namespace hfsim
