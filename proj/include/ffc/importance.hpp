#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ffc {

enum class Domain : std::uint8_t { fourier = 0, spatial = 1 };

std::string to_string(Domain domain);
Domain parse_domain(const std::string& name);

/// Score per feature. Fourier maps are indexed by FeatureIndex flattened as
/// c*H*W + u*W + v, spatial maps by pixel in [C,H,W] order.
struct ImportanceMap {
  Domain domain = Domain::fourier;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> scores;

  ImportanceMap() = default;
  ImportanceMap(Domain d, std::size_t c, std::size_t h, std::size_t w, std::vector<double> s);

  std::size_t size() const noexcept { return scores.size(); }
  /// Throws if scores are non-finite or the length differs from C*H*W.
  void validate() const;

  friend bool operator==(const ImportanceMap&, const ImportanceMap&) = default;
};

}  // namespace ffc
