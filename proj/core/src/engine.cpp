#include "hfsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hfsim {

namespace {

// The layer math is templated over the tensor type so the exact same
// algorithm runs at float32 in production and at float64 inside
// finite_diff_check, where float32 cancellation noise would otherwise
// swamp the comparison. All reductions accumulate in double either way.

template <typename T>
using scalar_t = typename decltype(T::data)::value_type;

struct Tensor64 {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  static Tensor64 zeros(std::vector<std::size_t> s) {
    std::size_t n = shape_product(s);
    return Tensor64{std::move(s), std::vector<double>(n, 0.0)};
  }
  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
};

struct Params64 {
  std::vector<std::pair<std::string, Tensor64>> entries_;
  Tensor64& at(const std::string& name) {
    for (auto& [n, t] : entries_) {
      if (n == name) return t;
    }
    throw std::out_of_range("Params64: no entry named '" + name + "'");
  }
  const Tensor64& at(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
      if (n == name) return t;
    }
    throw std::out_of_range("Params64: no entry named '" + name + "'");
  }
};

Params64 to_params64(const ParamSet& params) {
  Params64 out;
  for (const auto& [name, t] : params.entries()) {
    out.entries_.emplace_back(name, Tensor64{t.shape, std::vector<double>(t.data.begin(), t.data.end())});
  }
  return out;
}

Tensor64 to_tensor64(const TensorF& t) { return Tensor64{t.shape, std::vector<double>(t.data.begin(), t.data.end())}; }

[[noreturn]] void forward_shape_error(std::size_t layer_index, const LayerSpec& layer,
                                      const std::vector<std::size_t>& shape) {
  throw std::invalid_argument("forward: layer" + std::to_string(layer_index) + " (" + layer_kind_name(layer.kind) +
                              ") cannot consume input of shape " + shape_to_string(shape));
}

template <typename T>
void validate_layer_input(std::size_t index, const LayerSpec& layer, const T& x) {
  switch (layer.kind) {
    case LayerKind::Dense:
      if (x.rank() != 2 || x.shape[1] != layer.in_features) forward_shape_error(index, layer, x.shape);
      break;
    case LayerKind::Conv2d:
      if (x.rank() != 4 || x.shape[1] != layer.in_channels) forward_shape_error(index, layer, x.shape);
      if (x.shape[2] + 2 * layer.padding < layer.kernel || x.shape[3] + 2 * layer.padding < layer.kernel)
        forward_shape_error(index, layer, x.shape);
      break;
    case LayerKind::MaxPool2d:
    case LayerKind::AvgPool2d:
      if (x.rank() != 4 || x.shape[2] < layer.window || x.shape[3] < layer.window)
        forward_shape_error(index, layer, x.shape);
      break;
    case LayerKind::Relu:
    case LayerKind::Flatten:
      break;
  }
}

template <typename T>
T dense_forward(const LayerSpec& layer, const T& w, const T& b, const T& x) {
  using S = scalar_t<T>;
  std::size_t n = x.shape[0];
  std::size_t in = layer.in_features, out = layer.out_features;
  T y = T::zeros({n, out});
  for (std::size_t i = 0; i < n; ++i) {
    const S* xr = x.data.data() + i * in;
    for (std::size_t o = 0; o < out; ++o) {
      const S* wr = w.data.data() + o * in;
      double acc = b.data[o];
      for (std::size_t j = 0; j < in; ++j) acc += static_cast<double>(wr[j]) * static_cast<double>(xr[j]);
      y.data[i * out + o] = static_cast<S>(acc);
    }
  }
  return y;
}

template <typename T>
void dense_backward(const LayerSpec& layer, const T& w, const T& x, const T& dy, T* dw, T* db, T* dx) {
  using S = scalar_t<T>;
  std::size_t n = x.shape[0];
  std::size_t in = layer.in_features, out = layer.out_features;
  if (dw) {
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t j = 0; j < in; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          acc += static_cast<double>(dy.data[i * out + o]) * static_cast<double>(x.data[i * in + j]);
        dw->data[o * in + j] += static_cast<S>(acc);
      }
      double bacc = 0.0;
      for (std::size_t i = 0; i < n; ++i) bacc += static_cast<double>(dy.data[i * out + o]);
      db->data[o] += static_cast<S>(bacc);
    }
  }
  if (dx) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < in; ++j) {
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o)
          acc += static_cast<double>(dy.data[i * out + o]) * static_cast<double>(w.data[o * in + j]);
        dx->data[i * in + j] = static_cast<S>(acc);
      }
    }
  }
}

template <typename T>
T conv_forward(const LayerSpec& layer, const T& w, const T& b, const T& x) {
  using S = scalar_t<T>;
  std::size_t n = x.shape[0], ic = layer.in_channels, h = x.shape[2], wd = x.shape[3];
  std::size_t oc = layer.out_channels, k = layer.kernel, s = layer.stride, p = layer.padding;
  std::size_t oh = (h + 2 * p - k) / s + 1, ow = (wd + 2 * p - k) / s + 1;
  T y = T::zeros({n, oc, oh, ow});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < oc; ++c) {
      for (std::size_t yy = 0; yy < oh; ++yy) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = b.data[c];
          for (std::size_t cc = 0; cc < ic; ++cc) {
            for (std::size_t kh = 0; kh < k; ++kh) {
              std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(yy * s + kh) - static_cast<std::ptrdiff_t>(p);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kw = 0; kw < k; ++kw) {
                std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx * s + kw) - static_cast<std::ptrdiff_t>(p);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                acc += static_cast<double>(w.data[((c * ic + cc) * k + kh) * k + kw]) *
                       static_cast<double>(
                           x.data[((i * ic + cc) * h + static_cast<std::size_t>(iy)) * wd +
                                  static_cast<std::size_t>(ix)]);
              }
            }
          }
          y.data[((i * oc + c) * oh + yy) * ow + xx] = static_cast<S>(acc);
        }
      }
    }
  }
  return y;
}

template <typename T>
void conv_backward(const LayerSpec& layer, const T& w, const T& x, const T& dy, T* dw, T* db, T* dx) {
  using S = scalar_t<T>;
  std::size_t n = x.shape[0], ic = layer.in_channels, h = x.shape[2], wd = x.shape[3];
  std::size_t oc = layer.out_channels, k = layer.kernel, s = layer.stride, p = layer.padding;
  std::size_t oh = dy.shape[2], ow = dy.shape[3];
  std::vector<double> dw_acc(dw ? dw->size() : 0, 0.0);
  std::vector<double> db_acc(db ? db->size() : 0, 0.0);
  std::vector<double> dx_acc(dx ? dx->size() : 0, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < oc; ++c) {
      for (std::size_t yy = 0; yy < oh; ++yy) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double g = static_cast<double>(dy.data[((i * oc + c) * oh + yy) * ow + xx]);
          if (db) db_acc[c] += g;
          for (std::size_t cc = 0; cc < ic; ++cc) {
            for (std::size_t kh = 0; kh < k; ++kh) {
              std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(yy * s + kh) - static_cast<std::ptrdiff_t>(p);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kw = 0; kw < k; ++kw) {
                std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx * s + kw) - static_cast<std::ptrdiff_t>(p);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                std::size_t xi =
                    ((i * ic + cc) * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix);
                std::size_t wi = ((c * ic + cc) * k + kh) * k + kw;
                if (dw) dw_acc[wi] += g * static_cast<double>(x.data[xi]);
                if (dx) dx_acc[xi] += g * static_cast<double>(w.data[wi]);
              }
            }
          }
        }
      }
    }
  }
  if (dw) {
    for (std::size_t j = 0; j < dw_acc.size(); ++j) dw->data[j] += static_cast<S>(dw_acc[j]);
    for (std::size_t j = 0; j < db_acc.size(); ++j) db->data[j] += static_cast<S>(db_acc[j]);
  }
  if (dx) {
    for (std::size_t j = 0; j < dx_acc.size(); ++j) dx->data[j] = static_cast<S>(dx_acc[j]);
  }
}

template <typename T>
T pool_forward(const LayerSpec& layer, const T& x, bool is_max, std::vector<std::size_t>* argmax) {
  using S = scalar_t<T>;
  std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  std::size_t win = layer.window, s = layer.pool_stride;
  std::size_t oh = (h - win) / s + 1, ow = (w - win) / s + 1;
  T y = T::zeros({n, c, oh, ow});
  if (is_max && argmax) argmax->assign(y.size(), 0);
  double inv_area = 1.0 / static_cast<double>(win * win);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t cc = 0; cc < c; ++cc) {
      for (std::size_t yy = 0; yy < oh; ++yy) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          std::size_t oi = ((i * c + cc) * oh + yy) * ow + xx;
          if (is_max) {
            S best = -std::numeric_limits<S>::infinity();
            std::size_t best_idx = 0;
            for (std::size_t ky = 0; ky < win; ++ky) {
              for (std::size_t kx = 0; kx < win; ++kx) {
                std::size_t xi = ((i * c + cc) * h + (yy * s + ky)) * w + (xx * s + kx);
                if (x.data[xi] > best) {
                  best = x.data[xi];
                  best_idx = xi;
                }
              }
            }
            y.data[oi] = best;
            if (argmax) (*argmax)[oi] = best_idx;
          } else {
            double acc = 0.0;
            for (std::size_t ky = 0; ky < win; ++ky) {
              for (std::size_t kx = 0; kx < win; ++kx) {
                acc += static_cast<double>(x.data[((i * c + cc) * h + (yy * s + ky)) * w + (xx * s + kx)]);
              }
            }
            y.data[oi] = static_cast<S>(acc * inv_area);
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void pool_backward(const LayerSpec& layer, const T& x, const T& dy, bool is_max,
                   const std::vector<std::size_t>& argmax, T* dx) {
  using S = scalar_t<T>;
  std::size_t c = x.shape[1], h = x.shape[2], w = x.shape[3];
  std::size_t n = x.shape[0];
  std::size_t win = layer.window, s = layer.pool_stride;
  std::size_t oh = dy.shape[2], ow = dy.shape[3];
  std::fill(dx->data.begin(), dx->data.end(), S(0));
  S inv_area = S(1) / static_cast<S>(win * win);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t cc = 0; cc < c; ++cc) {
      for (std::size_t yy = 0; yy < oh; ++yy) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          std::size_t oi = ((i * c + cc) * oh + yy) * ow + xx;
          S g = dy.data[oi];
          if (is_max) {
            dx->data[argmax[oi]] += g;
          } else {
            for (std::size_t ky = 0; ky < win; ++ky) {
              for (std::size_t kx = 0; kx < win; ++kx) {
                dx->data[((i * c + cc) * h + (yy * s + ky)) * w + (xx * s + kx)] += g * inv_area;
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
struct Trace {
  std::vector<T> inputs;
  std::vector<std::vector<std::size_t>> pool_argmax;
};

template <typename T, typename P>
T forward_impl(const ModelGraph& model, const P& params, const T& batch, Trace<T>& trace) {
  using S = scalar_t<T>;
  trace.inputs.clear();
  trace.pool_argmax.assign(model.layers.size(), {});
  T x = batch;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& layer = model.layers[i];
    validate_layer_input(i, layer, x);
    std::string prefix = "layer" + std::to_string(i);
    trace.inputs.push_back(x);
    switch (layer.kind) {
      case LayerKind::Dense:
        x = dense_forward(layer, params.at(prefix + ".weight"), params.at(prefix + ".bias"), x);
        break;
      case LayerKind::Conv2d:
        x = conv_forward(layer, params.at(prefix + ".weight"), params.at(prefix + ".bias"), x);
        break;
      case LayerKind::Relu:
        for (S& v : x.data) v = v > S(0) ? v : S(0);
        break;
      case LayerKind::MaxPool2d:
        x = pool_forward(layer, x, true, &trace.pool_argmax[i]);
        break;
      case LayerKind::AvgPool2d:
        x = pool_forward(layer, x, false, nullptr);
        break;
      case LayerKind::Flatten: {
        std::size_t n = x.shape[0];
        std::size_t flat = x.size() / n;
        x.shape = {n, flat};
        break;
      }
    }
  }
  trace.inputs.push_back(x);
  return x;
}

template <typename T, typename P>
void backward_impl(const ModelGraph& model, const P& params, const std::vector<T>& inputs,
                   const std::vector<std::vector<std::size_t>>& pool_argmax, const T& output_grad, P* grads,
                   T* input_grad) {
  using S = scalar_t<T>;
  if (inputs.size() != model.layers.size() + 1) {
    throw std::invalid_argument("graph_backward: trace does not match model");
  }
  T dy = output_grad;
  for (std::size_t idx = model.layers.size(); idx-- > 0;) {
    const LayerSpec& layer = model.layers[idx];
    const T& x = inputs[idx];
    bool need_dx = input_grad != nullptr || idx > 0;
    T dx;
    std::string prefix = "layer" + std::to_string(idx);
    switch (layer.kind) {
      case LayerKind::Dense:
        if (need_dx) dx = T::zeros(x.shape);
        dense_backward(layer, params.at(prefix + ".weight"), x, dy, grads ? &grads->at(prefix + ".weight") : nullptr,
                       grads ? &grads->at(prefix + ".bias") : nullptr, need_dx ? &dx : nullptr);
        break;
      case LayerKind::Conv2d:
        if (need_dx) dx = T::zeros(x.shape);
        conv_backward(layer, params.at(prefix + ".weight"), x, dy, grads ? &grads->at(prefix + ".weight") : nullptr,
                      grads ? &grads->at(prefix + ".bias") : nullptr, need_dx ? &dx : nullptr);
        break;
      case LayerKind::Relu:
        dx = dy;
        for (std::size_t j = 0; j < dx.data.size(); ++j) {
          if (x.data[j] <= S(0)) dx.data[j] = S(0);
        }
        break;
      case LayerKind::MaxPool2d:
        dx = T::zeros(x.shape);
        pool_backward(layer, x, dy, true, pool_argmax[idx], &dx);
        break;
      case LayerKind::AvgPool2d:
        dx = T::zeros(x.shape);
        pool_backward(layer, x, dy, false, {}, &dx);
        break;
      case LayerKind::Flatten:
        dx = std::move(dy);
        dx.shape = x.shape;
        break;
    }
    dy = std::move(dx);
  }
  if (input_grad) *input_grad = std::move(dy);
}

template <typename T>
double loss_head_impl(const ModelGraph& model, const T& output, const TensorF& targets, T* output_grad) {
  using S = scalar_t<T>;
  std::size_t n = output.shape[0];
  if (output_grad) *output_grad = T::zeros(output.shape);
  double loss = 0.0;
  switch (model.loss_kind) {
    case LossKind::CrossEntropy: {
      if (output.rank() != 2) throw std::invalid_argument("cross_entropy: output must be (N, classes)");
      std::size_t classes = output.shape[1];
      if (targets.size() != n) {
        throw std::invalid_argument("cross_entropy: expected " + std::to_string(n) + " class targets, got " +
                                    std::to_string(targets.size()));
      }
      for (std::size_t i = 0; i < n; ++i) {
        float tf = targets.data[i];
        auto t = static_cast<std::size_t>(tf);
        if (tf < 0.0f || static_cast<float>(t) != tf || t >= classes) {
          throw std::invalid_argument("cross_entropy: target " + std::to_string(tf) + " at row " + std::to_string(i) +
                                      " is not a class index in [0, " + std::to_string(classes) + ")");
        }
        const S* row = output.data.data() + i * classes;
        double mx = static_cast<double>(row[0]);
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
        loss += -(static_cast<double>(row[t]) - mx - std::log(sum));
        if (output_grad) {
          for (std::size_t c = 0; c < classes; ++c) {
            double p = std::exp(static_cast<double>(row[c]) - mx) / sum;
            output_grad->data[i * classes + c] =
                static_cast<S>((p - (c == t ? 1.0 : 0.0)) / static_cast<double>(n));
          }
        }
      }
      loss /= static_cast<double>(n);
      break;
    }
    case LossKind::Mse:
    case LossKind::Mae: {
      if (output.shape != targets.shape) {
        throw std::invalid_argument("loss: targets shape " + shape_to_string(targets.shape) +
                                    " does not match output shape " + shape_to_string(output.shape));
      }
      double inv = 1.0 / static_cast<double>(output.size());
      for (std::size_t j = 0; j < output.size(); ++j) {
        double r = static_cast<double>(output.data[j]) - static_cast<double>(targets.data[j]);
        if (model.loss_kind == LossKind::Mse) {
          loss += r * r * inv;
          if (output_grad) output_grad->data[j] = static_cast<S>(2.0 * r * inv);
        } else {
          loss += std::fabs(r) * inv;
          if (output_grad) output_grad->data[j] = static_cast<S>(r > 0.0 ? inv : (r < 0.0 ? -inv : 0.0));
        }
      }
      break;
    }
  }
  return loss;
}

LossGrad loss_and_grad_impl(const ModelGraph& model, const ParamSet& params, const TensorF& batch,
                            const TensorF& targets, TensorF* input_grad, const std::string& batch_id) {
  Trace<TensorF> trace;
  TensorF output = forward_impl(model, params, batch, trace);
  TensorF output_grad;
  LossGrad result;
  result.loss = loss_head_impl(model, output, targets, &output_grad);
  if (!std::isfinite(result.loss)) {
    throw std::runtime_error("loss_and_grad: non-finite loss on " + batch_id);
  }
  result.grads = params.zeros_like();
  backward_impl(model, params, trace.inputs, trace.pool_argmax, output_grad, &result.grads, input_grad);
  return result;
}

// Independent float64 forward evaluator for the finite-difference side of the
// check. Written against the layer definitions, not the engine templates, so
// the two gradient routes stay independent.
double fd_oracle_loss(const ModelGraph& model, const Params64& params, const TensorF& batch, const TensorF& targets) {
  std::size_t n = batch.shape[0];
  std::vector<double> x(batch.data.begin(), batch.data.end());
  std::vector<std::size_t> shape(batch.shape.begin() + 1, batch.shape.end());
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const LayerSpec& layer = model.layers[li];
    std::string prefix = "layer" + std::to_string(li);
    switch (layer.kind) {
      case LayerKind::Dense: {
        const auto& w = params.at(prefix + ".weight").data;
        const auto& b = params.at(prefix + ".bias").data;
        std::size_t in = layer.in_features, out = layer.out_features;
        std::vector<double> y(n * out);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t o = 0; o < out; ++o) {
            double acc = b[o];
            for (std::size_t j = 0; j < in; ++j) acc += w[o * in + j] * x[i * in + j];
            y[i * out + o] = acc;
          }
        x = std::move(y);
        shape = {out};
        break;
      }
      case LayerKind::Conv2d: {
        const auto& w = params.at(prefix + ".weight").data;
        const auto& b = params.at(prefix + ".bias").data;
        std::size_t ic = layer.in_channels, h = shape[1], wd = shape[2];
        std::size_t oc = layer.out_channels, k = layer.kernel, s = layer.stride, p = layer.padding;
        std::size_t oh = (h + 2 * p - k) / s + 1, ow = (wd + 2 * p - k) / s + 1;
        std::vector<double> y(n * oc * oh * ow, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < oc; ++c)
            for (std::size_t yy = 0; yy < oh; ++yy)
              for (std::size_t xx = 0; xx < ow; ++xx) {
                double acc = b[c];
                for (std::size_t cc = 0; cc < ic; ++cc)
                  for (std::size_t kh = 0; kh < k; ++kh) {
                    std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(yy * s + kh) - static_cast<std::ptrdiff_t>(p);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kw = 0; kw < k; ++kw) {
                      std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx * s + kw) - static_cast<std::ptrdiff_t>(p);
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                      acc += w[((c * ic + cc) * k + kh) * k + kw] *
                             x[((i * ic + cc) * h + static_cast<std::size_t>(iy)) * wd +
                               static_cast<std::size_t>(ix)];
                    }
                  }
                y[((i * oc + c) * oh + yy) * ow + xx] = acc;
              }
        x = std::move(y);
        shape = {oc, oh, ow};
        break;
      }
      case LayerKind::Relu:
        for (double& v : x) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::MaxPool2d:
      case LayerKind::AvgPool2d: {
        std::size_t c = shape[0], h = shape[1], w = shape[2];
        std::size_t win = layer.window, s = layer.pool_stride;
        std::size_t oh = (h - win) / s + 1, ow = (w - win) / s + 1;
        std::vector<double> y(n * c * oh * ow);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t cc = 0; cc < c; ++cc)
            for (std::size_t yy = 0; yy < oh; ++yy)
              for (std::size_t xx = 0; xx < ow; ++xx) {
                double out;
                if (layer.kind == LayerKind::MaxPool2d) {
                  out = -std::numeric_limits<double>::infinity();
                  for (std::size_t ky = 0; ky < win; ++ky)
                    for (std::size_t kx = 0; kx < win; ++kx)
                      out = std::max(out, x[((i * c + cc) * h + (yy * s + ky)) * w + (xx * s + kx)]);
                } else {
                  out = 0.0;
                  for (std::size_t ky = 0; ky < win; ++ky)
                    for (std::size_t kx = 0; kx < win; ++kx)
                      out += x[((i * c + cc) * h + (yy * s + ky)) * w + (xx * s + kx)];
                  out /= static_cast<double>(win * win);
                }
                y[((i * c + cc) * oh + yy) * ow + xx] = out;
              }
        x = std::move(y);
        shape = {c, oh, ow};
        break;
      }
      case LayerKind::Flatten:
        shape = {shape_product(shape)};
        break;
    }
  }
  double loss = 0.0;
  std::size_t per_sample = x.size() / n;
  switch (model.loss_kind) {
    case LossKind::CrossEntropy: {
      for (std::size_t i = 0; i < n; ++i) {
        auto t = static_cast<std::size_t>(targets.data[i]);
        const double* row = x.data() + i * per_sample;
        double mx = row[0];
        for (std::size_t c = 1; c < per_sample; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < per_sample; ++c) sum += std::exp(row[c] - mx);
        loss += -(row[t] - mx - std::log(sum));
      }
      loss /= static_cast<double>(n);
      break;
    }
    case LossKind::Mse:
    case LossKind::Mae: {
      double inv = 1.0 / static_cast<double>(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) {
        double r = x[j] - static_cast<double>(targets.data[j]);
        loss += (model.loss_kind == LossKind::Mse ? r * r : std::fabs(r)) * inv;
      }
      break;
    }
  }
  return loss;
}

}  // namespace

TensorF forward_traced(const ModelGraph& model, const ParamSet& params, const TensorF& batch, ForwardTrace& trace) {
  Trace<TensorF> t;
  TensorF out = forward_impl(model, params, batch, t);
  trace.inputs = std::move(t.inputs);
  trace.pool_argmax = std::move(t.pool_argmax);
  return out;
}

TensorF forward(const ModelGraph& model, const ParamSet& params, const TensorF& batch) {
  Trace<TensorF> trace;
  return forward_impl(model, params, batch, trace);
}

void graph_backward(const ModelGraph& model, const ParamSet& params, const ForwardTrace& trace,
                    const TensorF& output_grad, ParamSet* grads, TensorF* input_grad) {
  backward_impl(model, params, trace.inputs, trace.pool_argmax, output_grad, grads, input_grad);
}

double loss_and_output_grad(const ModelGraph& model, const TensorF& output, const TensorF& targets,
                            TensorF& output_grad) {
  return loss_head_impl(model, output, targets, &output_grad);
}

LossGrad loss_and_grad(const ModelGraph& model, const ParamSet& params, const TensorF& batch, const TensorF& targets) {
  return loss_and_grad_impl(model, params, batch, targets, nullptr, "batch");
}

LossGrad loss_and_grad_with_input(const ModelGraph& model, const ParamSet& params, const TensorF& batch,
                                  const TensorF& targets, TensorF& input_grad) {
  return loss_and_grad_impl(model, params, batch, targets, &input_grad, "batch");
}

double loss_only(const ModelGraph& model, const ParamSet& params, const TensorF& batch, const TensorF& targets,
                 const std::string& batch_id) {
  TensorF output = forward(model, params, batch);
  double loss = loss_head_impl(model, output, targets, static_cast<TensorF*>(nullptr));
  if (!std::isfinite(loss)) throw std::runtime_error("loss: non-finite loss on " + batch_id);
  return loss;
}

double finite_diff_check(const ModelGraph& model, const ParamSet& params, const TensorF& batch, const TensorF& targets,
                         double epsilon) {
  if (epsilon < 1e-6 || epsilon > 1e-2) {
    throw std::invalid_argument("finite_diff_check: epsilon must be in [1e-6, 1e-2]");
  }
  // Both routes are evaluated at float64: the analytic side runs the engine's
  // backward templates on widened inputs, the numeric side runs the
  // independent forward evaluator above. float32 rounding near cancellation
  // floors would otherwise dominate the relative error being measured.
  Params64 p64 = to_params64(params);
  Tensor64 batch64 = to_tensor64(batch);
  Trace<Tensor64> trace;
  Tensor64 out = forward_impl(model, p64, batch64, trace);
  Tensor64 output_grad;
  loss_head_impl(model, out, targets, &output_grad);
  Params64 grads;
  for (const auto& [name, t] : p64.entries_) grads.entries_.emplace_back(name, Tensor64::zeros(t.shape));
  backward_impl(model, p64, trace.inputs, trace.pool_argmax, output_grad, &grads,
                static_cast<Tensor64*>(nullptr));

  double max_rel = 0.0;
  for (std::size_t e = 0; e < p64.entries_.size(); ++e) {
    auto& values = p64.entries_[e].second.data;
    const auto& grad = grads.entries_[e].second.data;
    for (std::size_t j = 0; j < values.size(); ++j) {
      double saved = values[j];
      values[j] = saved + epsilon;
      double lp = fd_oracle_loss(model, p64, batch, targets);
      values[j] = saved - epsilon;
      double lm = fd_oracle_loss(model, p64, batch, targets);
      values[j] = saved;
      double numeric = (lp - lm) / (2.0 * epsilon);
      double a = grad[j];
      double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace hfsim
