#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ffc/fourier.hpp"
#include "ffc/tensor.hpp"

namespace ffc {

/// Samples of identical [C,H,W] shape with integer labels in [0, classes).
struct LabeledDataset {
  std::vector<Tensor> samples;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  /// For planted datasets: per class, one representative index of each planted
  /// conjugate pair. Empty for other data.
  std::vector<std::vector<FeatureIndex>> planted;

  std::size_t size() const noexcept { return samples.size(); }
  void validate() const;
  /// Samples [begin, end) with their labels; planted metadata is kept.
  LabeledDataset slice(std::size_t begin, std::size_t end) const;
  /// Stacks the given samples into a [B,C,H,W] batch.
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor all() const;
};

struct PlantedConfig {
  std::uint64_t seed = 0;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 4;
  std::size_t frequencies = 3;  // per class
  double noise = 0.1;           // Gaussian sigma
  std::size_t per_class = 200;
  double amplitude_min = 0.5;
  double amplitude_max = 1.0;
};

/// Draws `classes` disjoint sets of `frequencies` conjugate pairs, none of them
/// self-conjugate. Each pair is represented by its lexicographically smaller
/// member.
std::vector<std::vector<FeatureIndex>> choose_planted_frequencies(std::uint64_t seed, std::size_t height,
                                                                  std::size_t width, std::size_t classes,
                                                                  std::size_t frequencies);

/// Sample i has label i % classes and equals
///   sum_f a_f cos(2 pi (u_f x / m + v_f y / n) + phi_f) + N(0, noise^2)
/// over the frequencies of its class, with a_f ~ U[amplitude_min, amplitude_max]
/// and phi_f ~ U[0, 2 pi) drawn per sample. Throws UsageError when the sets
/// overlap (conjugates included) or contain a self-conjugate point.
LabeledDataset generate_planted_samples(const std::vector<std::vector<FeatureIndex>>& planted,
                                        const PlantedConfig& config, std::uint64_t sample_seed);

/// Frequencies from `config.seed`, then samples from the same seed.
LabeledDataset generate_planted_dataset(const PlantedConfig& config);

/// Copy of `data` with round(fraction * size) labels reassigned to a different
/// class, chosen by a seeded generator.
LabeledDataset with_label_noise(const LabeledDataset& data, double fraction, std::uint64_t seed);

}  // namespace ffc
