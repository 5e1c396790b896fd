#include "methods.hpp"

#include <algorithm>

#include "ffc/error.hpp"

namespace ffc::cli {
namespace {

std::optional<MethodKind> base_kind(const std::string& name) {
  if (name == "ffc") return MethodKind::ffc;
  if (name == "input_x_gradient") return MethodKind::input_x_gradient;
  if (name == "intgrad") return MethodKind::intgrad;
  if (name == "smoothgrad") return MethodKind::smoothgrad;
  if (name == "random") return MethodKind::random;
  if (name == "sorted_freq") return MethodKind::sorted_freq;
  if (name == "energy") return MethodKind::energy;
  return std::nullopt;
}

bool is_spatial(MethodKind k) {
  return k == MethodKind::input_x_gradient || k == MethodKind::intgrad || k == MethodKind::smoothgrad;
}

// Distinct, reproducible stream per sample.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(index) + 1;
}

}  // namespace

Domain Method::domain() const {
  if (transform) return Domain::fourier;
  return is_spatial(kind) ? Domain::spatial : Domain::fourier;
}

std::string Method::slug() const {
  std::string s = name;
  std::replace(s.begin(), s.end(), ':', '_');
  return s;
}

Method parse_method(const std::string& name) {
  Method m;
  m.name = name;
  std::string inner = name;
  for (const auto& [prefix, dir] : {std::pair{"fft_of:", TransformDirection::fft}, std::pair{"ifft_of:", TransformDirection::ifft}}) {
    const std::string p = prefix;
    if (name.rfind(p, 0) == 0) {
      inner = name.substr(p.size());
      m.transform = dir;
    }
  }
  const auto kind = base_kind(inner);
  if (!kind) throw UsageError("unknown method '" + name + "'");
  if (m.transform && !is_spatial(*kind)) {
    throw UsageError("'" + name + "': fft_of/ifft_of need a spatial method (input_x_gradient, intgrad, smoothgrad)");
  }
  m.kind = *kind;
  return m;
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& n : names) {
    auto m = parse_method(n);
    for (const auto& prev : out)
      if (prev.name == m.name) throw UsageError("method '" + n + "' listed twice");
    out.push_back(std::move(m));
  }
  if (out.empty()) throw UsageError("no methods given");
  return out;
}

ImportanceMap compute_map(const Method& method, const Checkpoint& model, const Tensor& x, std::size_t index,
                          std::optional<std::size_t> label, const MethodOptions& options, double* ffc_loss) {
  const std::uint64_t seed = sample_seed(options.seed, index);
  auto target = [&] { return resolve_target(model, x, options.ffc.target_policy, label); };
  ImportanceMap map;
  switch (method.kind) {
    case MethodKind::ffc: {
      auto r = ffc_with_trace(model, x, options.ffc, label);
      if (ffc_loss) *ffc_loss = r.trace.final_loss;
      return std::move(r.map);
    }
    case MethodKind::random: return baseline_scores(BaselineKind::random, x, seed);
    case MethodKind::sorted_freq: return baseline_scores(BaselineKind::sorted_freq, x, seed);
    case MethodKind::energy: return baseline_scores(BaselineKind::energy, x, seed);
    case MethodKind::input_x_gradient: map = input_x_gradient(model, x, target()); break;
    case MethodKind::intgrad: map = integrated_gradients(model, x, target(), options.ig_steps); break;
    case MethodKind::smoothgrad: {
      const auto [lo, hi] = std::minmax_element(x.values().begin(), x.values().end());
      const double sigma = options.sg_noise * (*hi - *lo);
      map = smoothgrad(model, x, target(), options.sg_samples, sigma, seed);
      break;
    }
  }
  if (method.transform) return spectrum_of_scores(map, *method.transform);
  return map;
}

}  // namespace ffc::cli
