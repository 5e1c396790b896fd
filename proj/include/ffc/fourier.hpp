#pragma once

#include <complex>
#include <compare>
#include <cstddef>
#include <span>
#include <vector>

#include "ffc/tensor.hpp"

namespace ffc {

using Complex = std::complex<double>;

/// Real-valued 2D signal, row-major, `height` rows by `width` columns.
struct RealGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  RealGrid() = default;
  RealGrid(std::size_t h, std::size_t w, double fill = 0.0);
  /// Validates dimensions and finiteness.
  RealGrid(std::size_t h, std::size_t w, std::vector<double> v);

  double& operator()(std::size_t row, std::size_t col) { return values[row * width + col]; }
  double operator()(std::size_t row, std::size_t col) const { return values[row * width + col]; }

  friend bool operator==(const RealGrid&, const RealGrid&) = default;
};

/// Complex 2D spectrum laid out like RealGrid. `from_real` records that the
/// spectrum came from a real signal, so conjugate symmetry is expected.
struct Spectrum {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Complex> values;
  bool from_real = false;

  Spectrum() = default;
  Spectrum(std::size_t h, std::size_t w);

  Complex& operator()(std::size_t u, std::size_t v) { return values[u * width + v]; }
  const Complex& operator()(std::size_t u, std::size_t v) const { return values[u * width + v]; }

  friend bool operator==(const Spectrum&, const Spectrum&) = default;
};

/// One Fourier feature: component (u, v) of channel `channel`.
struct FeatureIndex {
  std::size_t channel = 0;
  std::size_t u = 0;
  std::size_t v = 0;

  friend auto operator<=>(const FeatureIndex&, const FeatureIndex&) = default;
};

/// Per-channel spectra of a multichannel signal. All channels share dimensions.
class MultiSpectrum {
 public:
  MultiSpectrum() = default;
  explicit MultiSpectrum(std::vector<Spectrum> channels);

  std::size_t channels() const noexcept { return channels_.size(); }
  std::size_t height() const noexcept { return channels_.empty() ? 0 : channels_[0].height; }
  std::size_t width() const noexcept { return channels_.empty() ? 0 : channels_[0].width; }
  std::size_t feature_count() const noexcept { return channels() * height() * width(); }

  Spectrum& operator[](std::size_t c) { return channels_[c]; }
  const Spectrum& operator[](std::size_t c) const { return channels_[c]; }
  Complex& at(const FeatureIndex& f) { return channels_[f.channel](f.u, f.v); }
  const Complex& at(const FeatureIndex& f) const { return channels_[f.channel](f.u, f.v); }

  /// Flat index c*H*W + u*W + v, the order used by importance maps.
  std::size_t flat_index(const FeatureIndex& f) const noexcept {
    return (f.channel * height() + f.u) * width() + f.v;
  }
  FeatureIndex feature_at(std::size_t flat) const noexcept {
    const std::size_t plane = height() * width();
    return {flat / plane, (flat % plane) / width(), flat % width()};
  }

  friend bool operator==(const MultiSpectrum&, const MultiSpectrum&) = default;

 private:
  std::vector<Spectrum> channels_;
};

/// Forward 2D DFT, F(u,v) = sum_x sum_y X(x,y) exp(-j 2 pi (u x / m + v y / n)),
/// unnormalized. Power-of-two axes use radix-2 Cooley-Tukey, others a direct DFT.
Spectrum dft2(const RealGrid& grid);

/// Inverse 2D DFT with 1/(mn) normalization, keeping the complex result.
Spectrum idft2_complex(const Spectrum& spectrum);

/// Largest |Im| that idft2 tolerates before reporting a symmetry violation.
inline constexpr double kImaginaryResidualLimit = 1e-6;

/// Inverse 2D DFT of a conjugate-symmetric spectrum. Throws NumericalError if the
/// imaginary residual reaches kImaginaryResidualLimit.
RealGrid idft2(const Spectrum& spectrum);

/// Max |Im| of the inverse transform; 0 for a perfectly symmetric spectrum.
double imaginary_residual(const Spectrum& spectrum);

/// |F(u,v)|.
double energy(const Spectrum& spectrum, std::size_t u, std::size_t v);

/// (channel, (-u) mod m, (-v) mod n). DC and the Nyquist lines map onto themselves.
FeatureIndex conjugate_pair(const FeatureIndex& index, std::size_t height, std::size_t width);

inline bool is_self_conjugate(const FeatureIndex& index, std::size_t height, std::size_t width) {
  return conjugate_pair(index, height, width) == index;
}

/// Zeroes the listed components (and their conjugates when `pair_conjugates`)
/// in a copy of `spectrum`. Every other component is left bit-identical.
MultiSpectrum delete_components(const MultiSpectrum& spectrum, std::span<const FeatureIndex> features,
                                bool pair_conjugates = true);

/// sqrt(u'^2 + v'^2) with u' = u for u <= m/2, u - m otherwise (same for v').
double frequency_magnitude(std::size_t u, std::size_t v, std::size_t height, std::size_t width);

/// True when F(u,v) == conj(F(-u,-v)) within `tolerance` everywhere.
bool is_conjugate_symmetric(const Spectrum& spectrum, double tolerance = 1e-9);

/// Per-channel forward transform of a [C,H,W] tensor.
MultiSpectrum dft2_channels(const Tensor& image);
/// Per-channel inverse of a multispectrum back to a [C,H,W] tensor.
Tensor idft2_channels(const MultiSpectrum& spectrum);

RealGrid channel_grid(const Tensor& image, std::size_t channel);

}  // namespace ffc
