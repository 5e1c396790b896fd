#include "ffc/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "ffc/error.hpp"

namespace ffc {

void LabeledDataset::validate() const {
  if (samples.size() != labels.size()) throw DataError("dataset sample and label counts differ");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].shape() != samples[0].shape()) throw DataError("dataset samples have different shapes");
    if (labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) + " out of range");
    }
  }
}

LabeledDataset LabeledDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw UsageError("dataset slice out of range");
  LabeledDataset out;
  out.samples.assign(samples.begin() + begin, samples.begin() + end);
  out.labels.assign(labels.begin() + begin, labels.begin() + end);
  out.classes = classes;
  out.planted = planted;
  return out;
}

Tensor LabeledDataset::batch(std::span<const std::size_t> indices) const {
  std::vector<Tensor> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(samples.at(i));
  return stack(picked);
}

Tensor LabeledDataset::all() const { return stack(samples); }

std::vector<std::vector<FeatureIndex>> choose_planted_frequencies(std::uint64_t seed, std::size_t height,
                                                                  std::size_t width, std::size_t classes,
                                                                  std::size_t frequencies) {
  std::vector<FeatureIndex> candidates;
  for (std::size_t u = 0; u < height; ++u) {
    for (std::size_t v = 0; v < width; ++v) {
      const FeatureIndex f{0, u, v};
      const auto p = conjugate_pair(f, height, width);
      if (f < p) candidates.push_back(f);
    }
  }
  if (candidates.size() < classes * frequencies) {
    throw UsageError("grid too small for " + std::to_string(classes * frequencies) + " planted frequencies");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::vector<std::vector<FeatureIndex>> sets(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    sets[c].assign(candidates.begin() + c * frequencies, candidates.begin() + (c + 1) * frequencies);
    std::sort(sets[c].begin(), sets[c].end());
  }
  return sets;
}

LabeledDataset generate_planted_samples(const std::vector<std::vector<FeatureIndex>>& planted,
                                        const PlantedConfig& config, std::uint64_t sample_seed) {
  const std::size_t m = config.height, n = config.width;
  if (m == 0 || n == 0) throw UsageError("planted grid dimensions must be positive");
  if (planted.empty()) throw UsageError("planted dataset needs at least one class");
  if (config.noise < 0.0) throw UsageError("noise sigma must be nonnegative");
  if (config.amplitude_min > config.amplitude_max) throw UsageError("amplitude range is empty");

  std::set<FeatureIndex> seen;
  for (const auto& set : planted) {
    for (const auto& f : set) {
      if (f.u >= m || f.v >= n) throw UsageError("planted frequency out of bounds");
      const auto p = conjugate_pair(f, m, n);
      if (p == f) throw UsageError("planted frequencies must not be self-conjugate");
      const FeatureIndex key = std::min(FeatureIndex{0, f.u, f.v}, FeatureIndex{0, p.u, p.v});
      if (!seen.insert(key).second) throw UsageError("planted frequency sets overlap");
    }
  }

  std::mt19937_64 rng(sample_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  LabeledDataset out;
  out.classes = planted.size();
  out.planted = planted;
  const std::size_t total = config.per_class * planted.size();
  out.samples.reserve(total);
  out.labels.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t label = i % planted.size();
    Tensor img({1, m, n});
    for (auto& v : img.values()) v = config.noise * noise(rng);
    for (const auto& f : planted[label]) {
      const double a = config.amplitude_min + (config.amplitude_max - config.amplitude_min) * unit(rng);
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      for (std::size_t x = 0; x < m; ++x) {
        for (std::size_t y = 0; y < n; ++y) {
          // Reduce the integer phase index first so the angle stays small.
          const double turns = static_cast<double>((f.u * x) % m) / double(m) + static_cast<double>((f.v * y) % n) / double(n);
          img[x * n + y] += a * std::cos(2.0 * std::numbers::pi * turns + phase);
        }
      }
    }
    out.samples.push_back(std::move(img));
    out.labels.push_back(label);
  }
  return out;
}

LabeledDataset generate_planted_dataset(const PlantedConfig& config) {
  const auto sets = choose_planted_frequencies(config.seed, config.height, config.width, config.classes, config.frequencies);
  return generate_planted_samples(sets, config, config.seed + 1);
}

LabeledDataset with_label_noise(const LabeledDataset& data, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw UsageError("label noise fraction must lie in [0,1]");
  LabeledDataset out = data;
  if (data.classes < 2 || data.size() == 0) return out;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto flips = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  std::uniform_int_distribution<std::size_t> shift(1, data.classes - 1);
  for (std::size_t k = 0; k < flips; ++k) {
    auto& label = out.labels[order[k]];
    label = (label + shift(rng)) % data.classes;
  }
  return out;
}

}  // namespace ffc
