#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "hfsim/tensor.hpp"

namespace hfsim {

enum class TaskKind { Classification, Regression };

/// Global sample store. Labels are class indices (stored as floats) for
/// classification and finite reals for regression.
struct LabeledDataset {
  TensorF images;  // N x C x H x W
  std::vector<float> labels;
  TaskKind task_kind = TaskKind::Classification;
  std::size_t num_classes = 0;  // classification only

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> sample_shape() const;  // {C, H, W}

  /// Copy of one sample as a batch of one.
  TensorF sample(std::size_t index) const;

  /// Gather samples by index into a batch plus matching targets.
  /// Classification targets have shape {n}; regression targets {n, 1}.
  std::pair<TensorF, TensorF> gather(const std::vector<std::size_t>& indices) const;

  void validate() const;
};

struct SyntheticSpec {
  TaskKind task_kind = TaskKind::Classification;
  std::size_t num_classes = 2;
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t samples_per_class = 64;  // classification
  std::size_t total_samples = 0;       // regression (ignored for classification)
  float noise_sigma = 0.05f;
  /// Fraction of coarse pattern cells common to all classes. 0 gives fully
  /// independent class patterns; higher values concentrate the class signal
  /// in fewer cells and make the task harder.
  float shared_cell_fraction = 0.0f;
};

/// Synthetic image generator. Classification: each class has a fixed
/// blocky base pattern drawn from the seed; samples are the pattern plus
/// clamped Gaussian pixel noise, classes interleaved so any prefix stays
/// balanced. Regression: the target is uniform in [0,1] and the image is
/// that intensity plus noise, so mean brightness encodes the label.
LabeledDataset make_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed);

/// The per-class base pattern used by the generator (exposed so tests can
/// run a nearest-pattern classifier as an independent oracle).
TensorF synthetic_class_pattern(const SyntheticSpec& spec, std::uint64_t seed, std::size_t class_index);

/// Dataset view restricted to [first, first + count). Copies at desk scale.
LabeledDataset slice_dataset(const LabeledDataset& ds, std::size_t first, std::size_t count);

}  // namespace hfsim
