#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ffc/importance.hpp"
#include "ffc/nn.hpp"
#include "ffc/tensor.hpp"

namespace ffc {

/// Which end of the ranking is deleted first.
enum class DeletionOrder { least_first, most_first };

enum class GameDirection { least_first, most_first, both };

std::string to_string(DeletionOrder order);
std::string to_string(GameDirection direction);
GameDirection parse_game_direction(const std::string& name);

struct GameConfig {
  Domain domain = Domain::fourier;
  std::vector<double> fractions = default_fractions();
  GameDirection direction = GameDirection::both;
  bool pair_conjugates = true;

  /// 0.00, 0.05, ..., 0.95
  static std::vector<double> default_fractions();
  /// Grid starts at 0, is strictly ascending and does not exceed 1.
  void validate() const;
};

/// Number of scalar features a fraction of `features` removes: round(f * N).
std::size_t deletion_budget(double fraction, std::size_t features);

/// Flat indices sorted by score (ascending for least_first, descending for
/// most_first); equal scores keep ascending flat-index order.
std::vector<std::size_t> ranking(const ImportanceMap& map, DeletionOrder order);

/// Features removed under `budget`. In the Fourier domain with pairing, each
/// ranked feature brings its conjugate along and costs 2 (1 when
/// self-conjugate); selection stops at the first unit that would overrun the
/// budget, so the result is always a prefix of the ranking and may fall one
/// short of `budget`. Returned ascending.
std::vector<std::size_t> select_deleted(const ImportanceMap& map, std::size_t budget, DeletionOrder order,
                                        bool pair_conjugates);

/// Zeroes the given flat features of `x` in the map's domain. With no features
/// the input is returned unchanged.
Tensor delete_features(const Tensor& x, const ImportanceMap& map, std::span<const std::size_t> features,
                       bool pair_conjugates = true);

/// Deletes round(fraction * C*H*W) features of `x` in ranking order.
Tensor delete_fraction(const Tensor& x, const ImportanceMap& map, double fraction, DeletionOrder order,
                       const GameConfig& config);

/// softmax_c(model(x_modified)) / softmax_c(model(x_original)), c = argmax model(x_original).
double relative_confidence(const Checkpoint& model, const Tensor& x_modified, const Tensor& x_original);

/// Trapezoid rule over the percent axis (fractions scaled by 100).
double trapezoid_percent(std::span<const double> fractions, std::span<const double> values);

struct DeletionCurve {
  DeletionOrder order = DeletionOrder::least_first;
  std::vector<double> fractions;
  std::vector<double> mean;
  std::vector<double> standard_error;
  std::vector<std::vector<double>> per_sample;  // [sample][fraction], only when retained
};

struct GameReport {
  std::optional<DeletionCurve> least_first;
  std::optional<DeletionCurve> most_first;
  /// area(least_first) - area(most_first); present when both curves are run.
  std::optional<double> auc;
  std::optional<double> auc_standard_error;
  std::vector<double> per_sample_auc;
  std::size_t samples = 0;
  GameConfig config;
};

/// Deletion curves averaged over samples, one map per sample. Samples are
/// evaluated on `workers` threads; the reduction runs in sample order.
GameReport deletion_curves(const Checkpoint& model, std::span<const Tensor> samples,
                           std::span<const ImportanceMap> maps, const GameConfig& config, std::size_t workers = 1,
                           bool retain_per_sample = false);

/// Mean and standard error (n - 1 denominator) of `values`.
struct MeanStderr {
  double mean = 0.0;
  double standard_error = 0.0;
};
MeanStderr mean_and_stderr(std::span<const double> values);

}  // namespace ffc
