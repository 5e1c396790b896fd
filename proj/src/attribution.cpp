#include "ffc/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ffc/error.hpp"

namespace ffc {
namespace {

void check_image(const Checkpoint& model, const Tensor& x) {
  const auto& s = model.spec.input_shape;
  if (x.rank() != 3 || x.dim(0) != s[0] || x.dim(1) != s[1] || x.dim(2) != s[2]) {
    throw UsageError("input shape " + shape_string(x.shape()) + " does not match the model input");
  }
}

ImportanceMap spatial_map(const Tensor& x, std::vector<double> scores) {
  return ImportanceMap(Domain::spatial, x.dim(0), x.dim(1), x.dim(2), std::move(scores));
}

void check_same_dims(const MultiSpectrum& a, const MultiSpectrum& b) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width()) {
    throw UsageError("spectra have different dimensions");
  }
}

}  // namespace

std::string to_string(TargetPolicy policy) {
  return policy == TargetPolicy::predicted ? "predicted" : "ground_truth";
}

TargetPolicy parse_target_policy(const std::string& name) {
  if (name == "predicted") return TargetPolicy::predicted;
  if (name == "ground_truth") return TargetPolicy::ground_truth;
  throw UsageError("unknown target policy '" + name + "'");
}

std::string to_string(ProjectionDenominator denominator) {
  return denominator == ProjectionDenominator::expected ? "expected" : "original";
}

ProjectionDenominator parse_projection_denominator(const std::string& name) {
  if (name == "expected") return ProjectionDenominator::expected;
  if (name == "original") return ProjectionDenominator::original;
  throw UsageError("unknown projection denominator '" + name + "'");
}

void AttributionConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning rate must be positive");
  if (iterations < 1) throw UsageError("iterations must be at least 1");
  if (!(epsilon > 0.0)) throw UsageError("epsilon must be positive");
}

std::size_t resolve_target(const Checkpoint& model, const Tensor& x, TargetPolicy policy,
                           std::optional<std::size_t> label) {
  if (policy == TargetPolicy::ground_truth) {
    if (!label) throw UsageError("ground_truth target policy needs a label");
    if (*label >= model.spec.classes) throw UsageError("label out of range");
    return *label;
  }
  return predict_one(model, x.values());
}

RectificationTrace rectify(const Checkpoint& model, const Tensor& x, const AttributionConfig& config,
                           std::optional<std::size_t> label) {
  config.validate();
  check_image(model, x);
  x.require_finite("rectify input");
  RectificationTrace trace;
  trace.original = x;
  trace.rectified = x;
  trace.target = resolve_target(model, x, config.target_policy, label);
  auto& cur = trace.rectified.storage();
  for (std::size_t k = 0; k < config.iterations; ++k) {
    const auto lg = loss_gradient_one(model, cur, trace.target);
    if (!std::isfinite(lg.loss)) throw NumericalError("rectify: non-finite loss at iteration " + std::to_string(k));
    trace.losses.push_back(lg.loss);
    double norm2 = 0.0;
    for (double g : lg.gradient) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (!std::isfinite(norm)) throw NumericalError("rectify: non-finite gradient at iteration " + std::to_string(k));
    if (norm == 0.0) continue;
    const double step = config.learning_rate / norm;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      cur[i] -= step * lg.gradient[i];
      if (!std::isfinite(cur[i])) {
        throw NumericalError("rectify: non-finite input at iteration " + std::to_string(k));
      }
    }
  }
  trace.final_loss = loss_gradient_one(model, cur, trace.target).loss;
  return trace;
}

std::vector<double> ffc_project(const MultiSpectrum& original, const MultiSpectrum& expected,
                                const AttributionConfig& config) {
  check_same_dims(original, expected);
  std::vector<double> out(original.feature_count());
  const bool by_expected = config.projection_denominator == ProjectionDenominator::expected;
  for (std::size_t c = 0; c < original.channels(); ++c) {
    const auto& fx = original[c].values;
    const auto& fe = expected[c].values;
    for (std::size_t i = 0; i < fx.size(); ++i) {
      const double denom = std::abs(by_expected ? fe[i] : fx[i]);
      out[c * fx.size() + i] = denom < config.epsilon ? 0.0 : (fx[i] * std::conj(fe[i])).real() / denom;
    }
  }
  return out;
}

ImportanceMap ffc_importance(const MultiSpectrum& original, const MultiSpectrum& expected,
                             const AttributionConfig& config) {
  auto scores = ffc_project(original, expected, config);
  for (std::size_t c = 0; c < original.channels(); ++c) {
    const auto& fx = original[c].values;
    for (std::size_t i = 0; i < fx.size(); ++i) scores[c * fx.size() + i] -= std::abs(fx[i]);
  }
  return ImportanceMap(Domain::fourier, original.channels(), original.height(), original.width(), std::move(scores));
}

FfcResult ffc_with_trace(const Checkpoint& model, const Tensor& x, const AttributionConfig& config,
                         std::optional<std::size_t> label) {
  auto trace = rectify(model, x, config, label);
  auto map = ffc_importance(dft2_channels(trace.original), dft2_channels(trace.rectified), config);
  return {std::move(map), std::move(trace)};
}

ImportanceMap ffc(const Checkpoint& model, const Tensor& x, const AttributionConfig& config,
                  std::optional<std::size_t> label) {
  return ffc_with_trace(model, x, config, label).map;
}

ImportanceMap input_x_gradient(const Checkpoint& model, const Tensor& x, std::size_t target) {
  check_image(model, x);
  auto g = logit_gradient_one(model, x.values(), target);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= x[i];
  return spatial_map(x, std::move(g));
}

ImportanceMap integrated_gradients(const Checkpoint& model, const Tensor& x, std::size_t target, std::size_t steps) {
  check_image(model, x);
  if (steps < 1) throw UsageError("integrated gradients needs at least one step");
  std::vector<double> total(x.size(), 0.0);
  std::vector<double> point(x.size());
  for (std::size_t s = 0; s < steps; ++s) {
    const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < x.size(); ++i) point[i] = alpha * x[i];
    const auto g = logit_gradient_one(model, point, target);
    for (std::size_t i = 0; i < x.size(); ++i) total[i] += g[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) total[i] = total[i] / static_cast<double>(steps) * x[i];
  return spatial_map(x, std::move(total));
}

ImportanceMap smoothgrad(const Checkpoint& model, const Tensor& x, std::size_t target, std::size_t samples,
                         double sigma, std::uint64_t seed) {
  check_image(model, x);
  if (samples < 1) throw UsageError("smoothgrad needs at least one sample");
  if (!(sigma >= 0.0)) throw UsageError("smoothgrad sigma must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> total(x.size(), 0.0);
  std::vector<double> point(x.size());
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) point[i] = x[i] + sigma * normal(rng);
    const auto g = logit_gradient_one(model, point, target);
    for (std::size_t i = 0; i < x.size(); ++i) total[i] += g[i];
  }
  for (auto& v : total) v /= static_cast<double>(samples);
  return spatial_map(x, std::move(total));
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::random: return "random";
    case BaselineKind::sorted_freq: return "sorted_freq";
    case BaselineKind::energy: return "energy";
  }
  return "?";
}

BaselineKind parse_baseline_kind(const std::string& name) {
  if (name == "random") return BaselineKind::random;
  if (name == "sorted_freq") return BaselineKind::sorted_freq;
  if (name == "energy") return BaselineKind::energy;
  throw UsageError("unknown baseline kind '" + name + "'");
}

ImportanceMap baseline_scores(BaselineKind kind, const Tensor& x, std::uint64_t seed) {
  if (x.rank() != 3) throw UsageError("baseline scores expect a [C,H,W] input");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::vector<double> scores(C * H * W);
  switch (kind) {
    case BaselineKind::random: {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (auto& s : scores) s = unit(rng);
      break;
    }
    case BaselineKind::sorted_freq:
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t u = 0; u < H; ++u)
          for (std::size_t v = 0; v < W; ++v) scores[(c * H + u) * W + v] = -frequency_magnitude(u, v, H, W);
      break;
    case BaselineKind::energy: {
      const auto spec = dft2_channels(x);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H * W; ++i) scores[c * H * W + i] = std::abs(spec[c].values[i]);
      break;
    }
  }
  return ImportanceMap(Domain::fourier, C, H, W, std::move(scores));
}

ImportanceMap spectrum_of_scores(const ImportanceMap& spatial, TransformDirection direction) {
  spatial.validate();
  if (spatial.domain != Domain::spatial) throw UsageError("spectrum_of_scores expects a spatial map");
  const std::size_t plane = spatial.height * spatial.width;
  std::vector<double> out(spatial.size());
  for (std::size_t c = 0; c < spatial.channels; ++c) {
    Spectrum s(spatial.height, spatial.width);
    for (std::size_t i = 0; i < plane; ++i) s.values[i] = spatial.scores[c * plane + i];
    Spectrum t;
    if (direction == TransformDirection::fft) {
      RealGrid g(spatial.height, spatial.width,
                 std::vector<double>(spatial.scores.begin() + static_cast<std::ptrdiff_t>(c * plane),
                                     spatial.scores.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane)));
      t = dft2(g);
    } else {
      t = idft2_complex(s);
    }
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = std::abs(t.values[i]);
  }
  return ImportanceMap(Domain::fourier, spatial.channels, spatial.height, spatial.width, std::move(out));
}

}  // namespace ffc
