#include "ffc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ffc/error.hpp"
#include "ffc/game.hpp"
#include "ffc/parallel.hpp"

namespace ffc {

std::vector<std::uint8_t> binarize_high_score(const ImportanceMap& map) {
  map.validate();
  const double mean = std::accumulate(map.scores.begin(), map.scores.end(), 0.0) / static_cast<double>(map.size());
  std::vector<std::uint8_t> tags(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) tags[i] = map.scores[i] > mean ? 1 : 0;
  return tags;
}

void TagMatrix::validate() const {
  if (tags.size() != labels.size()) throw UsageError("tag matrix needs one label per sample");
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].size() != features()) throw UsageError("tag vectors differ in length");
    if (labels[i] >= classes) throw UsageError("tag matrix label out of range");
    for (auto t : tags[i])
      if (t > 1) throw UsageError("tags must be 0 or 1");
  }
}

TagMatrix build_tag_matrix(std::span<const ImportanceMap> maps, std::span<const std::size_t> labels,
                           std::size_t classes) {
  TagMatrix out;
  out.classes = classes;
  out.labels.assign(labels.begin(), labels.end());
  for (const auto& m : maps) out.tags.push_back(binarize_high_score(m));
  out.validate();
  return out;
}

std::optional<double> excess_kurtosis(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  if (!(m2 > 0.0)) return std::nullopt;
  return m4 / (m2 * m2) - 3.0;
}

KurtosisReport class_concentration_kurtosis(const TagMatrix& tags) {
  tags.validate();
  KurtosisReport out;
  out.per_class.resize(tags.classes);
  std::vector<std::vector<double>> sums(tags.classes, std::vector<double>(tags.features(), 0.0));
  std::vector<std::size_t> counts(tags.classes, 0);
  for (std::size_t i = 0; i < tags.tags.size(); ++i) {
    auto& s = sums[tags.labels[i]];
    for (std::size_t f = 0; f < s.size(); ++f) s[f] += tags.tags[i][f];
    ++counts[tags.labels[i]];
  }
  double total = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < tags.classes; ++c) {
    if (counts[c] < 2) {
      out.warnings.push_back("class " + std::to_string(c) + ": fewer than two samples, kurtosis undefined");
      continue;
    }
    out.per_class[c] = excess_kurtosis(sums[c]);
    if (!out.per_class[c]) {
      out.warnings.push_back("class " + std::to_string(c) + ": summed tags are constant, kurtosis undefined");
      continue;
    }
    total += *out.per_class[c];
    ++defined;
  }
  if (defined > 0) out.mean = total / static_cast<double>(defined);
  return out;
}

std::size_t interclass_specificity(const TagMatrix& tags) {
  tags.validate();
  if (tags.classes < 2) throw UsageError("specificity needs at least two classes");
  const std::size_t F = tags.features();
  std::vector<std::vector<std::uint8_t>> present(tags.classes, std::vector<std::uint8_t>(F, 0));
  for (std::size_t i = 0; i < tags.tags.size(); ++i) {
    auto& p = present[tags.labels[i]];
    for (std::size_t f = 0; f < F; ++f) p[f] |= tags.tags[i][f];
  }
  std::size_t count = 0;
  for (std::size_t f = 0; f < F; ++f) {
    std::size_t classes_present = 0;
    for (std::size_t c = 0; c < tags.classes; ++c) classes_present += present[c][f];
    count += classes_present == 1;
  }
  return count;
}

CharacteristicsReport characterize(const std::string& method, std::span<const ImportanceMap> maps,
                                   std::span<const std::size_t> labels, std::size_t classes) {
  if (maps.empty()) throw UsageError("characterize needs at least one map");
  const TagMatrix tags = build_tag_matrix(maps, labels, classes);
  CharacteristicsReport out;
  out.method = method;
  out.domain = maps[0].domain;
  out.features = tags.features();
  out.samples = maps.size();
  out.kurtosis = class_concentration_kurtosis(tags);
  out.specificity = interclass_specificity(tags);
  return out;
}

MaintainCurve maintain_rate_curve(const Checkpoint& model, std::span<const Tensor> samples,
                                  std::span<const ImportanceMap> maps, std::span<const double> keep_fractions,
                                  std::size_t workers) {
  if (samples.size() != maps.size()) throw UsageError("maintain rate needs one map per sample");
  for (const auto& m : maps) {
    if (m.domain != Domain::fourier) throw UsageError("maintain rate expects Fourier maps");
  }
  const std::size_t n = samples.size(), nk = keep_fractions.size();
  std::vector<std::vector<std::uint8_t>> kept(n, std::vector<std::uint8_t>(nk, 0));
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& map = maps[i];
    const std::size_t original = predict_one(model, samples[i].values());
    for (std::size_t k = 0; k < nk; ++k) {
      const auto keep = select_deleted(map, deletion_budget(keep_fractions[k], map.size()), DeletionOrder::most_first, true);
      std::vector<std::uint8_t> is_kept(map.size(), 0);
      for (auto f : keep) is_kept[f] = 1;
      std::vector<std::size_t> removed;
      for (std::size_t f = 0; f < map.size(); ++f)
        if (!is_kept[f]) removed.push_back(f);
      // The kept set is closed under conjugation, so its complement is too.
      const Tensor modified = delete_features(samples[i], map, removed, true);
      kept[i][k] = predict_one(model, modified.values()) == original;
    }
  });
  MaintainCurve out;
  out.keep_fractions.assign(keep_fractions.begin(), keep_fractions.end());
  for (std::size_t k = 0; k < nk; ++k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += kept[i][k];
    const double p = n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
    out.rate.push_back(p);
    out.standard_error.push_back(n ? std::sqrt(p * (1.0 - p) / static_cast<double>(n)) : 0.0);
  }
  return out;
}

std::vector<std::size_t> default_correction_schedule(std::size_t features, std::size_t steps, double max_fraction) {
  if (steps == 0) throw UsageError("correction schedule needs at least one step");
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i <= steps; ++i) {
    const auto b = static_cast<std::size_t>(
        std::llround(static_cast<double>(features) * max_fraction * static_cast<double>(i) / static_cast<double>(steps)));
    if (b > 0 && (out.empty() || b > out.back())) out.push_back(std::min(b, features));
  }
  return out;
}

CorrectionReport correct_misclassified(const Checkpoint& model, const LabeledDataset& data,
                                       const MapProvider& provider, std::span<const std::size_t> schedule,
                                       const std::string& method, std::size_t workers) {
  data.validate();
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    if (schedule[i] <= schedule[i - 1]) throw UsageError("correction schedule must be strictly ascending");
  }
  CorrectionReport report;
  report.method = method;
  report.schedule.assign(schedule.begin(), schedule.end());

  std::vector<std::size_t> wrong;
  std::vector<std::size_t> predicted(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    predicted[i] = predict_one(model, data.samples[i].values());
    if (predicted[i] != data.labels[i]) wrong.push_back(i);
  }
  report.misclassified = wrong.size();
  if (wrong.empty()) {
    report.empty = true;
    return report;
  }
  report.outcomes.resize(wrong.size());
  parallel_for(wrong.size(), workers, [&](std::size_t k) {
    const std::size_t i = wrong[k];
    const Tensor& x = data.samples[i];
    CorrectionOutcome outcome{i, predicted[i], std::nullopt, std::nullopt};
    const ImportanceMap map = provider(i, x);
    if (map.domain != Domain::fourier) throw UsageError("correction expects Fourier maps");
    for (std::size_t s = 0; s < schedule.size(); ++s) {
      const auto removed = select_deleted(map, schedule[s], DeletionOrder::most_first, true);
      const Tensor modified = delete_features(x, map, removed, true);
      if (predict_one(model, modified.values()) == data.labels[i]) {
        outcome.step = s;
        outcome.removed = removed.size();
        break;
      }
    }
    report.outcomes[k] = outcome;
  });
  for (const auto& o : report.outcomes) report.corrected += o.step.has_value();
  report.rate = static_cast<double>(report.corrected) / static_cast<double>(report.misclassified);
  return report;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double mean = 0.5 * static_cast<double>(a.size() - 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

Tensor deleted_features_to_spatial(const Tensor& x, std::span<const FeatureIndex> deleted) {
  const MultiSpectrum spec = dft2_channels(x);
  MultiSpectrum masked = spec;
  for (std::size_t c = 0; c < masked.channels(); ++c) {
    std::fill(masked[c].values.begin(), masked[c].values.end(), Complex{0.0, 0.0});
  }
  for (const auto& f : deleted) {
    if (f.channel >= spec.channels() || f.u >= spec.height() || f.v >= spec.width()) {
      throw UsageError("deleted feature index out of bounds");
    }
    const auto p = conjugate_pair(f, spec.height(), spec.width());
    masked.at(f) = spec.at(f);
    masked.at(p) = spec.at(p);
  }
  return idft2_channels(masked);
}

}  // namespace ffc
