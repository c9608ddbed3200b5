#include "hfsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hfsim/rng.hpp"

namespace hfsim {

std::vector<std::size_t> LabeledDataset::sample_shape() const {
  if (images.rank() != 4) throw std::logic_error("LabeledDataset: images must be N x C x H x W");
  return {images.shape[1], images.shape[2], images.shape[3]};
}

TensorF LabeledDataset::sample(std::size_t index) const {
  return gather({index}).first;
}

std::pair<TensorF, TensorF> LabeledDataset::gather(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw std::invalid_argument("gather: empty index list");
  std::size_t per = images.size() / images.shape[0];
  TensorF batch = TensorF::zeros({indices.size(), images.shape[1], images.shape[2], images.shape[3]});
  TensorF targets = task_kind == TaskKind::Classification ? TensorF::zeros({indices.size()})
                                                          : TensorF::zeros({indices.size(), 1});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::size_t idx = indices[i];
    if (idx >= size()) throw std::out_of_range("gather: index " + std::to_string(idx) + " out of range");
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(idx * per), per,
                batch.data.begin() + static_cast<std::ptrdiff_t>(i * per));
    targets.data[i] = labels[idx];
  }
  return {std::move(batch), std::move(targets)};
}

void LabeledDataset::validate() const {
  if (images.rank() != 4) throw std::invalid_argument("dataset: images must be N x C x H x W");
  if (images.shape[0] != labels.size()) throw std::invalid_argument("dataset: image/label count mismatch");
  if (labels.empty()) throw std::invalid_argument("dataset: empty");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    float v = labels[i];
    if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite label at " + std::to_string(i));
    if (task_kind == TaskKind::Classification) {
      auto c = static_cast<std::size_t>(v);
      if (v < 0.0f || static_cast<float>(c) != v || c >= num_classes) {
        throw std::invalid_argument("dataset: label " + std::to_string(v) + " at " + std::to_string(i) +
                                    " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
  }
}

namespace {

void check_spec(const SyntheticSpec& spec) {
  if (spec.image_size < 4) throw std::invalid_argument("synthetic dataset: image_size must be >= 4");
  if (spec.noise_sigma < 0.0f) throw std::invalid_argument("synthetic dataset: noise_sigma must be >= 0");
  if (spec.shared_cell_fraction < 0.0f || spec.shared_cell_fraction >= 1.0f) {
    throw std::invalid_argument("synthetic dataset: shared_cell_fraction must be in [0, 1)");
  }
  if (spec.channels == 0) throw std::invalid_argument("synthetic dataset: channels must be >= 1");
  if (spec.task_kind == TaskKind::Classification) {
    if (spec.num_classes < 2) throw std::invalid_argument("synthetic dataset: need >= 2 classes");
    if (spec.samples_per_class == 0) throw std::invalid_argument("synthetic dataset: samples_per_class must be >= 1");
  } else {
    if (spec.total_samples == 0) throw std::invalid_argument("synthetic dataset: total_samples must be >= 1");
  }
}

}  // namespace

TensorF synthetic_class_pattern(const SyntheticSpec& spec, std::uint64_t seed, std::size_t class_index) {
  check_spec(spec);
  // blocky pattern: a coarse random grid repeated over the image, distinct
  // per class. With shared cells, a seeded common grid covers most of the
  // image and only the remaining cells carry class identity.
  std::size_t hw = spec.image_size;
  std::size_t coarse = std::max<std::size_t>(1, hw / 4);
  Rng rng(seed_mix(seed, 0xc1a55ULL, class_index));
  TensorF coarse_grid = TensorF::zeros({spec.channels, coarse, coarse});
  for (float& v : coarse_grid.data) v = rng.next_uniform(0.1f, 0.9f);
  if (spec.shared_cell_fraction > 0.0f) {
    Rng common_rng(seed_mix(seed, 0xc033115ULL));
    std::size_t cells = coarse_grid.size();
    auto shared = static_cast<std::size_t>(spec.shared_cell_fraction * static_cast<float>(cells));
    shared = std::min(shared, cells - 1);  // every class keeps at least one distinct cell
    std::vector<std::size_t> order(cells);
    for (std::size_t i = 0; i < cells; ++i) order[i] = i;
    common_rng.shuffle(order);
    for (std::size_t i = 0; i < shared; ++i) {
      coarse_grid.data[order[i]] = 0.1f + 0.8f * common_rng.next_uniform();
    }
  }
  TensorF pattern = TensorF::zeros({spec.channels, hw, hw});
  for (std::size_t c = 0; c < spec.channels; ++c)
    for (std::size_t y = 0; y < hw; ++y)
      for (std::size_t x = 0; x < hw; ++x) {
        std::size_t cy = std::min(coarse - 1, y * coarse / hw);
        std::size_t cx = std::min(coarse - 1, x * coarse / hw);
        pattern.data[(c * hw + y) * hw + x] = coarse_grid.data[(c * coarse + cy) * coarse + cx];
      }
  return pattern;
}

LabeledDataset make_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  std::size_t hw = spec.image_size;
  std::size_t per = spec.channels * hw * hw;

  LabeledDataset ds;
  ds.task_kind = spec.task_kind;

  if (spec.task_kind == TaskKind::Classification) {
    std::size_t n = spec.samples_per_class * spec.num_classes;
    ds.num_classes = spec.num_classes;
    ds.images = TensorF::zeros({n, spec.channels, hw, hw});
    ds.labels.resize(n);
    std::vector<TensorF> patterns;
    for (std::size_t c = 0; c < spec.num_classes; ++c) patterns.push_back(synthetic_class_pattern(spec, seed, c));
    Rng noise(seed_mix(seed, 0x5a3f1ULL));
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t cls = i % spec.num_classes;  // interleaved: any prefix stays balanced
      ds.labels[i] = static_cast<float>(cls);
      const TensorF& p = patterns[cls];
      for (std::size_t j = 0; j < per; ++j) {
        float v = p.data[j] + spec.noise_sigma * noise.next_gaussian();
        ds.images.data[i * per + j] = std::clamp(v, 0.0f, 1.0f);
      }
    }
  } else {
    std::size_t n = spec.total_samples;
    ds.images = TensorF::zeros({n, spec.channels, hw, hw});
    ds.labels.resize(n);
    Rng rng(seed_mix(seed, 0x5a3f2ULL));
    for (std::size_t i = 0; i < n; ++i) {
      float t = rng.next_uniform();
      ds.labels[i] = t;
      for (std::size_t j = 0; j < per; ++j) {
        float v = t + spec.noise_sigma * rng.next_gaussian();
        ds.images.data[i * per + j] = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  ds.validate();
  return ds;
}

LabeledDataset slice_dataset(const LabeledDataset& ds, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > ds.size()) throw std::invalid_argument("slice_dataset: range out of bounds");
  std::size_t per = ds.images.size() / ds.images.shape[0];
  LabeledDataset out;
  out.task_kind = ds.task_kind;
  out.num_classes = ds.num_classes;
  out.images = TensorF::zeros({count, ds.images.shape[1], ds.images.shape[2], ds.images.shape[3]});
  std::copy_n(ds.images.data.begin() + static_cast<std::ptrdiff_t>(first * per), count * per, out.images.data.begin());
  out.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(first),
                    ds.labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

}  // namespace hfsim
