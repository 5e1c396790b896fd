#pragma once

// Independent oracles and fixtures shared by the unit tests. Nothing here calls
// into the code under test except to build inputs.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "ffc/fourier.hpp"
#include "ffc/nn.hpp"

namespace oracle {

using C = std::complex<double>;

/// Naive O((mn)^2) forward DFT with exact integer phase reduction.
inline std::vector<C> dft(const std::vector<double>& x, std::size_t m, std::size_t n) {
  std::vector<C> out(m * n);
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t v = 0; v < n; ++v) {
      C acc = 0;
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          const double phase = -2.0 * std::numbers::pi *
                               (static_cast<double>((u * a) % m) / static_cast<double>(m) +
                                static_cast<double>((v * b) % n) / static_cast<double>(n));
          acc += x[a * n + b] * std::polar(1.0, phase);
        }
      out[u * n + v] = acc;
    }
  return out;
}

inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t count, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(count);
  for (auto& x : v) x = d(rng);
  return v;
}

inline ffc::RealGrid random_grid(std::mt19937_64& rng, std::size_t m, std::size_t n) {
  return ffc::RealGrid(m, n, random_values(rng, m * n));
}

/// c * cos(2 pi (p a / m + q b / n)) on an m x n grid.
inline ffc::RealGrid cosine(std::size_t m, std::size_t n, std::size_t p, std::size_t q, double c = 1.0) {
  ffc::RealGrid g(m, n);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < n; ++b)
      g(a, b) = c * std::cos(2.0 * std::numbers::pi *
                             (static_cast<double>(p * a) / static_cast<double>(m) +
                              static_cast<double>(q * b) / static_cast<double>(n)));
  return g;
}

/// Single dense layer f(x) = W x + b with the given weights ([K x D] row-major).
inline ffc::Checkpoint linear_model(std::array<std::size_t, 3> shape, std::size_t classes, std::vector<double> w,
                                    std::vector<double> b) {
  ffc::Checkpoint ck;
  ck.spec.arch = ffc::Architecture::mlp;
  ck.spec.input_shape = shape;
  ck.spec.classes = classes;
  ck.spec.hidden = {};
  ck.parameters = std::move(w);
  ck.parameters.insert(ck.parameters.end(), b.begin(), b.end());
  return ck;
}

/// Logits independent of the input.
inline ffc::Checkpoint constant_model(std::array<std::size_t, 3> shape, std::vector<double> bias) {
  const std::size_t d = shape[0] * shape[1] * shape[2];
  const std::size_t k = bias.size();
  return linear_model(shape, k, std::vector<double>(d * k, 0.0), std::move(bias));
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
