#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ffc/fourier.hpp"
#include "ffc/importance.hpp"
#include "ffc/nn.hpp"
#include "ffc/tensor.hpp"

namespace ffc {

enum class TargetPolicy { predicted, ground_truth };

/// Which magnitude normalizes the correlation Re(F_X conj(F_X')):
/// `expected` divides by |F_X'|, `original` by |F_X|. Under `expected` every
/// score is |F_X| (cos dphi - 1) <= 0, so near-empty components rank highest;
/// `original` measures the change of each component along its own phase.
enum class ProjectionDenominator { expected, original };

std::string to_string(TargetPolicy policy);
TargetPolicy parse_target_policy(const std::string& name);
std::string to_string(ProjectionDenominator denominator);
ProjectionDenominator parse_projection_denominator(const std::string& name);

struct AttributionConfig {
  double learning_rate = 1000.0;
  std::size_t iterations = 50;
  TargetPolicy target_policy = TargetPolicy::predicted;
  double epsilon = 1e-12;
  ProjectionDenominator projection_denominator = ProjectionDenominator::original;

  void validate() const;
};

/// Class the attribution explains: argmax of the model on `x` for `predicted`,
/// `label` for `ground_truth` (which then must be present).
std::size_t resolve_target(const Checkpoint& model, const Tensor& x, TargetPolicy policy,
                           std::optional<std::size_t> label);

struct RectificationTrace {
  std::vector<double> losses;  // loss at iterate k, before step k
  double final_loss = 0.0;     // loss at the rectified input
  Tensor original;
  Tensor rectified;
  std::size_t target = 0;
};

/// Gradient descent on the input against the frozen model's cross-entropy:
/// X <- X - lr * g / ||g||_2, `iterations` times. A zero gradient leaves X in place.
RectificationTrace rectify(const Checkpoint& model, const Tensor& x, const AttributionConfig& config,
                           std::optional<std::size_t> label = std::nullopt);

/// Re(F_X conj(F_X')) / |denominator| per component, 0 where the denominator
/// magnitude is below epsilon. Flattened in FeatureIndex order.
std::vector<double> ffc_project(const MultiSpectrum& original, const MultiSpectrum& expected,
                                const AttributionConfig& config);

/// Projection minus |F_X|.
ImportanceMap ffc_importance(const MultiSpectrum& original, const MultiSpectrum& expected,
                             const AttributionConfig& config);

/// Full pipeline: rectify, transform both signals, score every Fourier feature.
ImportanceMap ffc(const Checkpoint& model, const Tensor& x, const AttributionConfig& config,
                  std::optional<std::size_t> label = std::nullopt);

/// Same, also returning the rectification trace.
struct FfcResult {
  ImportanceMap map;
  RectificationTrace trace;
};
FfcResult ffc_with_trace(const Checkpoint& model, const Tensor& x, const AttributionConfig& config,
                         std::optional<std::size_t> label = std::nullopt);

// Spatial baselines. All differentiate the target-class logit.

ImportanceMap input_x_gradient(const Checkpoint& model, const Tensor& x, std::size_t target);

/// Midpoint Riemann sum of the logit gradient along the straight path from the
/// zero baseline, times x.
ImportanceMap integrated_gradients(const Checkpoint& model, const Tensor& x, std::size_t target,
                                   std::size_t steps = 50);

/// Mean logit gradient at x + N(0, sigma^2) over `samples` draws.
ImportanceMap smoothgrad(const Checkpoint& model, const Tensor& x, std::size_t target, std::size_t samples,
                         double sigma, std::uint64_t seed);

enum class BaselineKind { random, sorted_freq, energy };
std::string to_string(BaselineKind kind);
BaselineKind parse_baseline_kind(const std::string& name);

/// Fourier-domain reference rankings: i.i.d. U[0,1) scores, negative centered
/// frequency magnitude, or |F_X|.
ImportanceMap baseline_scores(BaselineKind kind, const Tensor& x, std::uint64_t seed = 0);

enum class TransformDirection { fft, ifft };

/// Modulus of the per-channel forward (fft) or 1/(mn)-normalized inverse (ifft)
/// transform of a spatial score map.
ImportanceMap spectrum_of_scores(const ImportanceMap& spatial, TransformDirection direction);

}  // namespace ffc
