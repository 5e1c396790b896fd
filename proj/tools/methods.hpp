#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ffc/attribution.hpp"
#include "ffc/importance.hpp"
#include "ffc/nn.hpp"

namespace ffc::cli {

enum class MethodKind { ffc, input_x_gradient, intgrad, smoothgrad, random, sorted_freq, energy };

/// A method name as accepted on the command line, e.g. "ffc" or "fft_of:intgrad".
struct Method {
  std::string name;
  MethodKind kind = MethodKind::ffc;
  std::optional<TransformDirection> transform;

  Domain domain() const;
  /// Name usable as a directory component.
  std::string slug() const;
};

/// Throws UsageError for unknown names, or for fft_of/ifft_of wrapped around a
/// method that is not spatial.
Method parse_method(const std::string& name);
std::vector<Method> parse_methods(const std::vector<std::string>& names);

struct MethodOptions {
  AttributionConfig ffc;
  std::size_t ig_steps = 50;
  std::size_t sg_samples = 25;
  double sg_noise = 0.15;  // fraction of the input's value range
  std::uint64_t seed = 0;
};

/// Map for sample `index`. `label` is only consulted under the ground-truth
/// target policy. `ffc_loss` receives the final rectification loss for ffc.
ImportanceMap compute_map(const Method& method, const Checkpoint& model, const Tensor& x, std::size_t index,
                          std::optional<std::size_t> label, const MethodOptions& options,
                          double* ffc_loss = nullptr);

}  // namespace ffc::cli
