#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ffc/data.hpp"
#include "ffc/fourier.hpp"
#include "ffc/importance.hpp"
#include "ffc/nn.hpp"

namespace ffc {

/// 1 where the score is strictly above the map's arithmetic mean, else 0.
std::vector<std::uint8_t> binarize_high_score(const ImportanceMap& map);

struct TagMatrix {
  std::vector<std::vector<std::uint8_t>> tags;  // [sample][feature]
  std::vector<std::size_t> labels;
  std::size_t classes = 0;

  std::size_t features() const noexcept { return tags.empty() ? 0 : tags[0].size(); }
  void validate() const;
};

TagMatrix build_tag_matrix(std::span<const ImportanceMap> maps, std::span<const std::size_t> labels,
                           std::size_t classes);

/// Fisher excess kurtosis m4 / m2^2 - 3 with population moments; empty when
/// the values have zero variance.
std::optional<double> excess_kurtosis(std::span<const double> values);

struct KurtosisReport {
  std::vector<std::optional<double>> per_class;  // empty entry marks "undefined"
  std::optional<double> mean;                    // over defined classes
  std::vector<std::string> warnings;
};

/// Per class: sum the tag vectors of its samples, then take the excess kurtosis
/// of the summed vector. Classes with fewer than two samples or a constant sum
/// are undefined and left out of the mean.
KurtosisReport class_concentration_kurtosis(const TagMatrix& tags);

/// Number of features tagged in samples of exactly one class (inter-class
/// presence mean equal to 1/K).
std::size_t interclass_specificity(const TagMatrix& tags);

struct CharacteristicsReport {
  std::string method;
  Domain domain = Domain::fourier;
  std::size_t features = 0;
  std::size_t samples = 0;
  KurtosisReport kurtosis;
  std::size_t specificity = 0;
};

CharacteristicsReport characterize(const std::string& method, std::span<const ImportanceMap> maps,
                                   std::span<const std::size_t> labels, std::size_t classes);

struct MaintainCurve {
  std::vector<double> keep_fractions;
  std::vector<double> rate;
  std::vector<double> standard_error;  // binomial sqrt(p (1 - p) / n)
};

/// For each keep fraction k, zero every Fourier feature outside the top
/// round(k * N) (conjugate-paired) and report how often the argmax class survives.
MaintainCurve maintain_rate_curve(const Checkpoint& model, std::span<const Tensor> samples,
                                  std::span<const ImportanceMap> maps, std::span<const double> keep_fractions,
                                  std::size_t workers = 1);

struct CorrectionOutcome {
  std::size_t sample = 0;             // index into the dataset
  std::size_t predicted = 0;          // class before any removal
  std::optional<std::size_t> step;    // schedule step that corrected it
  std::optional<std::size_t> removed; // features removed at that step
};

struct CorrectionReport {
  std::string method;
  std::vector<std::size_t> schedule;
  std::vector<CorrectionOutcome> outcomes;
  std::size_t misclassified = 0;
  std::size_t corrected = 0;
  double rate = 0.0;
  /// True when the model made no mistakes, so there was nothing to correct.
  bool empty = false;
};

/// Produces the Fourier map used to rank a sample's features.
using MapProvider = std::function<ImportanceMap(std::size_t index, const Tensor& x)>;

/// Budgets round(features * max_fraction * i / steps) for i = 1..steps, deduplicated.
std::vector<std::size_t> default_correction_schedule(std::size_t features, std::size_t steps = 10,
                                                     double max_fraction = 0.10);

/// For every misclassified sample, removes the top-scored features at each
/// budget of the schedule (cumulative, conjugate-paired) and stops as soon as
/// the argmax matches the label.
CorrectionReport correct_misclassified(const Checkpoint& model, const LabeledDataset& data,
                                       const MapProvider& provider, std::span<const std::size_t> schedule,
                                       const std::string& method, std::size_t workers = 1);

/// Spearman rank correlation; ties get their average rank. Empty when either
/// side is constant or the lengths differ or are below 2.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

/// Spatial rendering of the removed signal: the inverse transform of x's
/// spectrum restricted to `deleted` (plus conjugates). x minus this rendering is
/// the deletion result.
Tensor deleted_features_to_spatial(const Tensor& x, std::span<const FeatureIndex> deleted);

}  // namespace ffc
