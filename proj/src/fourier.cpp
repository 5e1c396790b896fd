#include "ffc/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ffc/error.hpp"

namespace ffc {
namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// exp(sign * j * 2 pi k / n) for k in [0, n). Each entry is computed directly
// rather than by recurrence so the error does not accumulate with n.
std::vector<Complex> twiddles(std::size_t n, double sign) {
  std::vector<Complex> w(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    w[k] = {std::cos(angle), std::sin(angle)};
  }
  return w;
}

// In-place 1D transform of a strided sequence. `w` holds twiddles for length n.
class Transform1D {
 public:
  Transform1D(std::size_t n, bool inverse) : n_(n), w_(twiddles(n, inverse ? 1.0 : -1.0)), buf_(n) {
    if (is_power_of_two(n_)) {
      rev_.resize(n_);
      std::size_t bits = 0;
      while ((std::size_t{1} << bits) < n_) ++bits;
      for (std::size_t i = 0; i < n_; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
        rev_[i] = r;
      }
    }
  }

  void operator()(Complex* data, std::size_t stride) {
    if (n_ == 1) return;
    if (!rev_.empty()) {
      radix2(data, stride);
    } else {
      direct(data, stride);
    }
  }

 private:
  void radix2(Complex* data, std::size_t stride) {
    for (std::size_t i = 0; i < n_; ++i) buf_[rev_[i]] = data[i * stride];
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const Complex t = w_[k * step] * buf_[start + k + half];
          const Complex a = buf_[start + k];
          buf_[start + k] = a + t;
          buf_[start + k + half] = a - t;
        }
      }
    }
    for (std::size_t i = 0; i < n_; ++i) data[i * stride] = buf_[i];
  }

  void direct(Complex* data, std::size_t stride) {
    for (std::size_t k = 0; k < n_; ++k) {
      Complex acc{0.0, 0.0};
      for (std::size_t j = 0; j < n_; ++j) acc += data[j * stride] * w_[(j * k) % n_];
      buf_[k] = acc;
    }
    for (std::size_t i = 0; i < n_; ++i) data[i * stride] = buf_[i];
  }

  std::size_t n_;
  std::vector<Complex> w_;
  std::vector<Complex> buf_;
  std::vector<std::size_t> rev_;
};

void transform2d(std::vector<Complex>& values, std::size_t height, std::size_t width, bool inverse) {
  Transform1D rows(width, inverse);
  for (std::size_t r = 0; r < height; ++r) rows(values.data() + r * width, 1);
  Transform1D cols(height, inverse);
  for (std::size_t c = 0; c < width; ++c) cols(values.data() + c, width);
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(height * width);
    for (auto& z : values) z *= scale;
  }
}

void require_dims(std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw UsageError("grid dimensions must be positive");
}

void require_finite(const Spectrum& s) {
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (!std::isfinite(s.values[i].real()) || !std::isfinite(s.values[i].imag())) {
      throw NumericalError("spectrum component " + std::to_string(i) + " is not finite");
    }
  }
}

}  // namespace

RealGrid::RealGrid(std::size_t h, std::size_t w, double fill) : height(h), width(w), values(h * w, fill) {
  require_dims(h, w);
}

RealGrid::RealGrid(std::size_t h, std::size_t w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {
  require_dims(h, w);
  if (values.size() != h * w) throw UsageError("grid value count does not match height*width");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw NumericalError("grid value " + std::to_string(i) + " is not finite");
  }
}

Spectrum::Spectrum(std::size_t h, std::size_t w) : height(h), width(w), values(h * w) { require_dims(h, w); }

MultiSpectrum::MultiSpectrum(std::vector<Spectrum> channels) : channels_(std::move(channels)) {
  if (channels_.empty()) throw UsageError("multispectrum needs at least one channel");
  for (const auto& s : channels_) {
    if (s.height != channels_[0].height || s.width != channels_[0].width) {
      throw UsageError("multispectrum channels must share dimensions");
    }
  }
}

Spectrum dft2(const RealGrid& grid) {
  require_dims(grid.height, grid.width);
  if (grid.values.size() != grid.height * grid.width) throw UsageError("grid value count does not match dims");
  Spectrum out(grid.height, grid.width);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    if (!std::isfinite(grid.values[i])) {
      throw NumericalError("dft2 input value " + std::to_string(i) + " is not finite");
    }
    out.values[i] = grid.values[i];
  }
  transform2d(out.values, out.height, out.width, false);
  out.from_real = true;
  return out;
}

Spectrum idft2_complex(const Spectrum& spectrum) {
  require_dims(spectrum.height, spectrum.width);
  require_finite(spectrum);
  Spectrum out = spectrum;
  out.from_real = false;
  transform2d(out.values, out.height, out.width, true);
  return out;
}

double imaginary_residual(const Spectrum& spectrum) {
  const Spectrum z = idft2_complex(spectrum);
  double worst = 0.0;
  for (const auto& c : z.values) worst = std::max(worst, std::abs(c.imag()));
  return worst;
}

RealGrid idft2(const Spectrum& spectrum) {
  const Spectrum z = idft2_complex(spectrum);
  RealGrid out(z.height, z.width);
  double worst = 0.0;
  for (std::size_t i = 0; i < z.values.size(); ++i) {
    worst = std::max(worst, std::abs(z.values[i].imag()));
    out.values[i] = z.values[i].real();
  }
  if (worst >= kImaginaryResidualLimit) {
    throw NumericalError("idft2: spectrum is not conjugate-symmetric (imaginary residual " +
                         std::to_string(worst) + ")");
  }
  return out;
}

double energy(const Spectrum& spectrum, std::size_t u, std::size_t v) {
  if (u >= spectrum.height || v >= spectrum.width) throw UsageError("spectrum index out of bounds");
  return std::abs(spectrum(u, v));
}

FeatureIndex conjugate_pair(const FeatureIndex& index, std::size_t height, std::size_t width) {
  if (index.u >= height || index.v >= width) throw UsageError("feature index out of bounds");
  return {index.channel, (height - index.u) % height, (width - index.v) % width};
}

MultiSpectrum delete_components(const MultiSpectrum& spectrum, std::span<const FeatureIndex> features,
                                bool pair_conjugates) {
  for (const auto& f : features) {
    if (f.channel >= spectrum.channels() || f.u >= spectrum.height() || f.v >= spectrum.width()) {
      throw UsageError("delete_components: feature (" + std::to_string(f.channel) + "," + std::to_string(f.u) +
                       "," + std::to_string(f.v) + ") out of bounds");
    }
  }
  MultiSpectrum out = spectrum;
  for (const auto& f : features) {
    out.at(f) = Complex{0.0, 0.0};
    if (pair_conjugates) out.at(conjugate_pair(f, spectrum.height(), spectrum.width())) = Complex{0.0, 0.0};
  }
  return out;
}

double frequency_magnitude(std::size_t u, std::size_t v, std::size_t height, std::size_t width) {
  if (u >= height || v >= width) throw UsageError("frequency index out of bounds");
  const auto centered = [](std::size_t k, std::size_t n) {
    return 2 * k <= n ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
  };
  return std::hypot(centered(u, height), centered(v, width));
}

bool is_conjugate_symmetric(const Spectrum& spectrum, double tolerance) {
  for (std::size_t u = 0; u < spectrum.height; ++u) {
    for (std::size_t v = 0; v < spectrum.width; ++v) {
      const auto p = conjugate_pair({0, u, v}, spectrum.height, spectrum.width);
      if (std::abs(spectrum(u, v) - std::conj(spectrum(p.u, p.v))) > tolerance) return false;
    }
  }
  return true;
}

RealGrid channel_grid(const Tensor& image, std::size_t channel) {
  if (image.rank() != 3) throw UsageError("expected a [C,H,W] tensor, got " + shape_string(image.shape()));
  auto s = image.slice(channel);
  return RealGrid(image.dim(1), image.dim(2), std::vector<double>(s.begin(), s.end()));
}

MultiSpectrum dft2_channels(const Tensor& image) {
  if (image.rank() != 3) throw UsageError("expected a [C,H,W] tensor, got " + shape_string(image.shape()));
  std::vector<Spectrum> channels;
  channels.reserve(image.dim(0));
  for (std::size_t c = 0; c < image.dim(0); ++c) channels.push_back(dft2(channel_grid(image, c)));
  return MultiSpectrum(std::move(channels));
}

Tensor idft2_channels(const MultiSpectrum& spectrum) {
  Tensor out({spectrum.channels(), spectrum.height(), spectrum.width()});
  for (std::size_t c = 0; c < spectrum.channels(); ++c) {
    const RealGrid g = idft2(spectrum[c]);
    std::copy(g.values.begin(), g.values.end(), out.slice(c).begin());
  }
  return out;
}

}  // namespace ffc
