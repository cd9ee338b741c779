#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "lmfap/error.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Orthonormal DCT-II basis: row k holds alpha(k) cos(pi (2n+1) k / 2N).
template <class T>
RowMatrix<T> dct_basis(std::size_t n) {
  RowMatrix<T> c(n, n);
  const double N = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double alpha = k == 0 ? std::sqrt(1.0 / N) : std::sqrt(2.0 / N);
    for (std::size_t i = 0; i < n; ++i)
      c(k, i) = static_cast<T>(alpha * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * N)));
  }
  return c;
}

namespace detail {

template <class T>
const RowMatrix<T>& cached_basis(std::size_t n) {
  thread_local std::vector<RowMatrix<T>> cache;
  if (cache.size() <= n) cache.resize(n + 1);
  if (cache[n].rows() != static_cast<Eigen::Index>(n)) cache[n] = dct_basis<T>(n);
  return cache[n];
}

template <class T>
void require_square(const Tensor<T>& t, const char* what) {
  if (t.height() != t.width())
    throw NonSquareInput(std::string(what) + ": spatial dims " + std::to_string(t.height()) + "x" +
                         std::to_string(t.width()) + " are not square");
  if (t.height() == 0) throw NonSquareInput(std::string(what) + ": empty input");
}

}  // namespace detail

/// Whole-image spectrum: one N x N orthonormal DCT-II coefficient plane per channel.
template <class T>
struct Spectrum {
  Tensor<T> coefficients;

  std::size_t size() const noexcept { return coefficients.height(); }
  std::size_t channels() const noexcept { return coefficients.channels(); }
  T& at(std::size_t c, std::size_t i, std::size_t j) { return coefficients.at(c, i, j); }
  const T& at(std::size_t c, std::size_t i, std::size_t j) const { return coefficients.at(c, i, j); }
};

/// Forward 2D DCT of every channel of a single square image.
template <class T>
Spectrum<T> dct2(const Tensor<T>& img) {
  detail::require_square(img, "dct2");
  const std::size_t n = img.height();
  const auto& c = detail::cached_basis<T>(n);
  Spectrum<T> out{Tensor<T>(1, img.channels(), n, n)};
  for (std::size_t ch = 0; ch < img.channels(); ++ch) {
    Eigen::Map<const RowMatrix<T>> x(img.channel(ch).data(), n, n);
    Eigen::Map<RowMatrix<T>> y(out.coefficients.channel(ch).data(), n, n);
    y.noalias() = c * x * c.transpose();
  }
  return out;
}

template <class T>
Tensor<T> idct2(const Spectrum<T>& spec) {
  detail::require_square(spec.coefficients, "idct2");
  const std::size_t n = spec.size();
  const auto& c = detail::cached_basis<T>(n);
  Tensor<T> out(1, spec.channels(), n, n);
  for (std::size_t ch = 0; ch < spec.channels(); ++ch) {
    Eigen::Map<const RowMatrix<T>> y(spec.coefficients.channel(ch).data(), n, n);
    Eigen::Map<RowMatrix<T>> x(out.channel(ch).data(), n, n);
    x.noalias() = c.transpose() * y * c;
  }
  return out;
}

/// Binary N x N mask over spectrum coordinates.
struct FrequencyMask {
  std::size_t size = 0;
  std::vector<std::uint8_t> keep;  // row-major, 1 = keep

  static FrequencyMask ones(std::size_t n) { return {n, std::vector<std::uint8_t>(n * n, 1)}; }
  std::uint8_t operator()(std::size_t i, std::size_t j) const { return keep[i * size + j]; }
  std::size_t zeros() const {
    std::size_t z = 0;
    for (auto k : keep) z += k == 0;
    return z;
  }
};

/// Mask removing the n-th component (1-based): zero where row or column equals n-1.
inline FrequencyMask removal_mask(std::size_t size, std::size_t n) {
  if (n < 1 || n > size)
    throw BandOutOfRange("band " + std::to_string(n) + " outside [1, " + std::to_string(size) + "]");
  auto m = FrequencyMask::ones(size);
  const std::size_t k = n - 1;
  for (std::size_t t = 0; t < size; ++t) {
    m.keep[k * size + t] = 0;
    m.keep[t * size + k] = 0;
  }
  return m;
}

template <class T>
Spectrum<T> apply_mask(Spectrum<T> spec, const FrequencyMask& mask) {
  if (mask.size != spec.size()) throw ShapeMismatch("mask size does not match spectrum");
  for (std::size_t c = 0; c < spec.channels(); ++c)
    for (std::size_t i = 0; i < mask.size; ++i)
      for (std::size_t j = 0; j < mask.size; ++j)
        if (!mask(i, j)) spec.at(c, i, j) = T(0);
  return spec;
}

/// idct2(dct2(img) * M_n). With clip = false the result is the raw linear reconstruction.
template <class T>
Tensor<T> remove_component(const Tensor<T>& img, std::size_t n, bool clip = true) {
  detail::require_square(img, "remove_component");
  auto out = idct2(apply_mask(dct2(img), removal_mask(img.height(), n)));
  if (clip) clip_unit(out);
  return out;
}

/// 1-based band (shell) index of a spectrum coordinate.
constexpr std::size_t shell_band(std::size_t i, std::size_t j) noexcept { return (i > j ? i : j) + 1; }

struct SpectrumProfile {
  std::vector<double> band_energy;  // index b-1 holds band b
  std::string band_scheme = "shell-max";

  std::size_t bands() const noexcept { return band_energy.size(); }
  double band(std::size_t b) const { return band_energy.at(b - 1); }
  double total() const {
    double s = 0;
    for (double e : band_energy) s += e;
    return s;
  }
  /// Mean energy over bands [lo, hi], 1-based inclusive.
  double mean_over(std::size_t lo, std::size_t hi) const {
    double s = 0;
    for (std::size_t b = lo; b <= hi; ++b) s += band(b);
    return s / double(hi - lo + 1);
  }
  /// Share of the total energy held by bands [lo, hi].
  double fraction(std::size_t lo, std::size_t hi) const {
    const double t = total();
    if (t <= 0) return 0;
    double s = 0;
    for (std::size_t b = lo; b <= hi; ++b) s += band(b);
    return s / t;
  }
};

/// Squared-coefficient energy aggregated over shells max(i,j) = b-1, summed over channels.
template <class T>
SpectrumProfile band_spectrum(const Tensor<T>& delta) {
  detail::require_square(delta, "band_spectrum");
  const auto spec = dct2(delta);
  const std::size_t n = spec.size();
  SpectrumProfile p;
  p.band_energy.assign(n, 0.0);
  for (std::size_t c = 0; c < spec.channels(); ++c)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double v = spec.at(c, i, j);
        p.band_energy[shell_band(i, j) - 1] += v * v;
      }
  return p;
}

/// Zeroes every shell with band index >= cutoff. cutoff > N leaves the input untouched.
template <class T>
Tensor<T> low_pass(const Tensor<T>& delta, std::size_t cutoff) {
  detail::require_square(delta, "low_pass");
  if (cutoff < 1) throw BandOutOfRange("cutoff must be >= 1");
  const std::size_t n = delta.height();
  if (cutoff > n) return delta;
  auto spec = dct2(delta);
  for (std::size_t c = 0; c < spec.channels(); ++c)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (shell_band(i, j) >= cutoff) spec.at(c, i, j) = T(0);
  return idct2(spec);
}

}  // namespace lmfap
