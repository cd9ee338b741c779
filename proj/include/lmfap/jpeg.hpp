#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "lmfap/dct.hpp"
#include "lmfap/error.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

/// 8x8 quantization tables in natural (row-major) order.
struct QuantTables {
  std::array<int, 64> luma{};
  std::array<int, 64> chroma{};
  bool operator==(const QuantTables&) const = default;
};

// ITU-T T.81 Annex K, tables K.1 and K.2.
inline constexpr std::array<int, 64> kBaseLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
inline constexpr std::array<int, 64> kBaseChroma = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

inline void require_quality(int q) {
  if (q < 1 || q > 100) throw QualityOutOfRange("JPEG quality " + std::to_string(q) + " outside [1, 100]");
}

/// IJG quality scaling of the Annex K tables, clamped to baseline range.
inline QuantTables quant_tables_for_quality(int q) {
  require_quality(q);
  const int scale = q < 50 ? 5000 / q : 200 - 2 * q;
  auto scaled = [scale](const std::array<int, 64>& base) {
    std::array<int, 64> t{};
    for (std::size_t i = 0; i < 64; ++i) t[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
    return t;
  };
  return {scaled(kBaseLuma), scaled(kBaseChroma)};
}

enum class RoundMode { hard, cubic_approx };

struct JpegConfig {
  int quality = 50;
  bool differentiable = false;
  RoundMode round_mode = RoundMode::hard;  // subsampling is always 4:4:4

  static JpegConfig hard(int q) { return {q, false, RoundMode::hard}; }
  static JpegConfig smooth(int q) { return {q, true, RoundMode::cubic_approx}; }

  void validate() const {
    require_quality(quality);
    if (differentiable && round_mode != RoundMode::cubic_approx)
      throw InvalidConfig("differentiable JPEG requires cubic rounding");
  }
};

/// round(v) + (v - round(v))^3; exact on integers, differentiable between half-integers.
template <class T>
T round_approx(T v) {
  const T r = std::round(v);
  const T d = v - r;
  return r + d * d * d;
}

template <class T>
T round_approx_derivative(T v) {
  const T d = v - std::round(v);
  return T(3) * d * d;
}

namespace detail {

// BT.601 full-range (JFIF) colour transforms on 0..255 samples.
template <class T>
void rgb_to_ycc(T r, T g, T b, T& y, T& cb, T& cr) {
  y = T(0.299) * r + T(0.587) * g + T(0.114) * b;
  cb = T(-0.168735892) * r + T(-0.331264108) * g + T(0.5) * b + T(128);
  cr = T(0.5) * r + T(-0.418687589) * g + T(-0.081312411) * b + T(128);
}

template <class T>
void ycc_to_rgb(T y, T cb, T cr, T& r, T& g, T& b) {
  r = y + T(1.402) * (cr - T(128));
  g = y - T(0.344136286) * (cb - T(128)) - T(0.714136286) * (cr - T(128));
  b = y + T(1.772) * (cb - T(128));
}

// Transposes of the linear parts, for the backward pass.
template <class T>
void rgb_to_ycc_adjoint(T dy, T dcb, T dcr, T& dr, T& dg, T& db) {
  dr = T(0.299) * dy + T(-0.168735892) * dcb + T(0.5) * dcr;
  dg = T(0.587) * dy + T(-0.331264108) * dcb + T(-0.418687589) * dcr;
  db = T(0.114) * dy + T(0.5) * dcb + T(-0.081312411) * dcr;
}

template <class T>
void ycc_to_rgb_adjoint(T dr, T dg, T db, T& dy, T& dcb, T& dcr) {
  dy = dr + dg + db;
  dcb = T(-0.344136286) * dg + T(1.772) * db;
  dcr = T(1.402) * dr + T(-0.714136286) * dg;
}

inline std::size_t padded8(std::size_t n) { return (n + 7) / 8 * 8; }

template <class T>
struct JpegWork {
  std::size_t h = 0, w = 0, ph = 0, pw = 0;
  // Padded Y/Cb/Cr planes, level shifted.
  Tensor<T> ycc;
  // Quantizer inputs (coefficient / step), per plane and block position.
  Tensor<T> scaled;
  // Reconstructed RGB on the 0..255 scale before clipping.
  Tensor<T> rgb;
};

template <class T>
void block_transform(const RowMatrix<T>& basis, const T* src, std::size_t stride, T* dst, std::size_t dstride,
                     bool inverse) {
  Eigen::Matrix<T, 8, 8, Eigen::RowMajor> in, out;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) in(i, j) = src[i * stride + j];
  Eigen::Matrix<T, 8, 8, Eigen::RowMajor> c = basis;
  if (inverse)
    out.noalias() = c.transpose() * in * c;
  else
    out.noalias() = c * in * c.transpose();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) dst[i * dstride + j] = out(i, j);
}

// Shared pipeline. For the hard path the rounding is exact; the smooth path
// keeps the quantizer inputs in `work` so the backward pass can reuse them.
template <class T>
Tensor<T> jpeg_pipeline(const Tensor<T>& img, const JpegConfig& cfg, JpegWork<T>* work) {
  cfg.validate();
  if (img.batch() != 1 || img.channels() != 3) throw ShapeMismatch("JPEG expects a single RGB image");
  const auto tables = quant_tables_for_quality(cfg.quality);
  const bool smooth = cfg.round_mode == RoundMode::cubic_approx;
  const std::size_t h = img.height(), w = img.width(), ph = padded8(h), pw = padded8(w);
  const auto& basis = cached_basis<T>(8);

  Tensor<T> ycc(1, 3, ph, pw);
  for (std::size_t y = 0; y < ph; ++y)
    for (std::size_t x = 0; x < pw; ++x) {
      const std::size_t sy = std::min(y, h - 1), sx = std::min(x, w - 1);
      T r = img.at(0, sy, sx) * T(255), g = img.at(1, sy, sx) * T(255), b = img.at(2, sy, sx) * T(255);
      if (!smooth) {
        r = std::round(std::clamp(r, T(0), T(255)));
        g = std::round(std::clamp(g, T(0), T(255)));
        b = std::round(std::clamp(b, T(0), T(255)));
      }
      T yy, cb, cr;
      rgb_to_ycc(r, g, b, yy, cb, cr);
      ycc.at(0, y, x) = yy - T(128);
      ycc.at(1, y, x) = cb - T(128);
      ycc.at(2, y, x) = cr - T(128);
    }

  Tensor<T> scaled(1, 3, ph, pw), recon(1, 3, ph, pw);
  T coef[64], deq[64];
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& q = c == 0 ? tables.luma : tables.chroma;
    for (std::size_t by = 0; by < ph; by += 8)
      for (std::size_t bx = 0; bx < pw; bx += 8) {
        block_transform(basis, &ycc.at(c, by, bx), pw, coef, 8, false);
        for (std::size_t k = 0; k < 64; ++k) {
          const T v = coef[k] / T(q[k]);
          scaled.at(c, by + k / 8, bx + k % 8) = v;
          deq[k] = (smooth ? round_approx(v) : std::round(v)) * T(q[k]);
        }
        block_transform(basis, deq, 8, &recon.at(c, by, bx), pw, true);
      }
  }

  Tensor<T> out(1, 3, h, w);
  Tensor<T> rgb;
  if (work) rgb = Tensor<T>(1, 3, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      T r, g, b;
      ycc_to_rgb(recon.at(0, y, x) + T(128), recon.at(1, y, x) + T(128), recon.at(2, y, x) + T(128), r, g, b);
      const T px[3] = {r, g, b};
      for (std::size_t c = 0; c < 3; ++c) {
        if (work) rgb.at(c, y, x) = px[c];
        T v = std::clamp(px[c], T(0), T(255));
        if (!smooth) v = std::round(v);
        out.at(c, y, x) = v / T(255);
      }
    }
  if (work) *work = JpegWork<T>{h, w, ph, pw, std::move(ycc), std::move(scaled), std::move(rgb)};
  return out;
}

}  // namespace detail

/// Decoded pixels of a baseline 4:4:4 JPEG encode at cfg.quality. Input and
/// output are snapped to 8-bit levels as a real encoder/decoder pair would.
/// Entropy coding is lossless and therefore omitted.
template <class T>
Tensor<T> jpeg_roundtrip(const Tensor<T>& img, const JpegConfig& cfg) {
  if (cfg.differentiable) throw InvalidConfig("jpeg_roundtrip requires a non-differentiable config");
  return detail::jpeg_pipeline<T>(img, cfg, nullptr);
}

template <class T>
Tensor<T> jpeg_roundtrip(const Tensor<T>& img, int quality) {
  return jpeg_roundtrip(img, JpegConfig::hard(quality));
}

/// JPEG with rounding replaced by round_approx; keeps what backward() needs.
template <class T>
class DifferentiableJpeg {
 public:
  explicit DifferentiableJpeg(int quality) : cfg_(JpegConfig::smooth(quality)) { cfg_.validate(); }

  int quality() const noexcept { return cfg_.quality; }

  struct Trace {
    detail::JpegWork<T> work;
  };

  Tensor<T> forward(const Tensor<T>& img, Trace* trace = nullptr) const {
    return detail::jpeg_pipeline<T>(img, cfg_, trace ? &trace->work : nullptr);
  }

  /// Vector-Jacobian product: gradient w.r.t. the input given d(output).
  Tensor<T> backward(const Trace& trace, const Tensor<T>& grad_out) const {
    const auto& wk = trace.work;
    if (grad_out.channels() != 3 || grad_out.height() != wk.h || grad_out.width() != wk.w)
      throw ShapeMismatch("differentiable JPEG backward: gradient shape mismatch");
    const auto& basis = detail::cached_basis<T>(8);

    // Through clip, /255 and the inverse colour transform, into padded YCbCr.
    Tensor<T> d_recon(1, 3, wk.ph, wk.pw);
    for (std::size_t y = 0; y < wk.h; ++y)
      for (std::size_t x = 0; x < wk.w; ++x) {
        T d[3];
        for (std::size_t c = 0; c < 3; ++c) {
          const T v = wk.rgb.at(c, y, x);
          d[c] = (v >= T(0) && v <= T(255)) ? grad_out.at(c, y, x) / T(255) : T(0);
        }
        detail::ycc_to_rgb_adjoint(d[0], d[1], d[2], d_recon.at(0, y, x), d_recon.at(1, y, x),
                                   d_recon.at(2, y, x));
      }

    // IDCT adjoint is the DCT; the quantizer contributes round_approx'(v).
    Tensor<T> d_ycc(1, 3, wk.ph, wk.pw);
    T dcoef[64], dsrc[64];
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t by = 0; by < wk.ph; by += 8)
        for (std::size_t bx = 0; bx < wk.pw; bx += 8) {
          detail::block_transform(basis, &d_recon.at(c, by, bx), wk.pw, dcoef, 8, false);
          for (std::size_t k = 0; k < 64; ++k)
            dsrc[k] = dcoef[k] * round_approx_derivative(wk.scaled.at(c, by + k / 8, bx + k % 8));
          detail::block_transform(basis, dsrc, 8, &d_ycc.at(c, by, bx), wk.pw, true);
        }
    }

    // Edge replication folds padded gradients back onto border pixels.
    Tensor<T> grad_in(1, 3, wk.h, wk.w);
    for (std::size_t y = 0; y < wk.ph; ++y)
      for (std::size_t x = 0; x < wk.pw; ++x) {
        T dr, dg, db;
        detail::rgb_to_ycc_adjoint(d_ycc.at(0, y, x), d_ycc.at(1, y, x), d_ycc.at(2, y, x), dr, dg, db);
        const std::size_t sy = std::min(y, wk.h - 1), sx = std::min(x, wk.w - 1);
        grad_in.at(0, sy, sx) += dr * T(255);
        grad_in.at(1, sy, sx) += dg * T(255);
        grad_in.at(2, sy, sx) += db * T(255);
      }
    return grad_in;
  }

 private:
  JpegConfig cfg_;
};

template <class T>
Tensor<T> differentiable_jpeg(const Tensor<T>& img, const JpegConfig& cfg) {
  if (!cfg.differentiable) throw InvalidConfig("differentiable_jpeg requires a differentiable config");
  return DifferentiableJpeg<T>(cfg.quality).forward(img);
}

}  // namespace lmfap
