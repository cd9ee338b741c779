#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the library routine it is checking.

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <functional>
#include <numbers>
#include <vector>

#include <jpeglib.h>

#include "lmfap/embedder.hpp"
#include "lmfap/random.hpp"
#include "lmfap/tensor.hpp"

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline double dct_scale(std::size_t k, std::size_t n) {
  return k == 0 ? std::sqrt(1.0 / double(n)) : std::sqrt(2.0 / double(n));
}

/// Direct O(N^4) DCT-II summation.
inline Grid naive_dct2(const Grid& x) {
  const std::size_t n = x.size();
  Grid out(n, std::vector<double>(n, 0.0));
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          s += x[i][j] * std::cos(std::numbers::pi * (2.0 * double(i) + 1) * double(u) / (2.0 * double(n))) *
               std::cos(std::numbers::pi * (2.0 * double(j) + 1) * double(v) / (2.0 * double(n)));
      out[u][v] = dct_scale(u, n) * dct_scale(v, n) * s;
    }
  return out;
}

/// Direct O(N^4) inverse (DCT-III) summation.
inline Grid naive_idct2(const Grid& c) {
  const std::size_t n = c.size();
  Grid out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v)
          s += dct_scale(u, n) * dct_scale(v, n) * c[u][v] *
               std::cos(std::numbers::pi * (2.0 * double(i) + 1) * double(u) / (2.0 * double(n))) *
               std::cos(std::numbers::pi * (2.0 * double(j) + 1) * double(v) / (2.0 * double(n)));
      out[i][j] = s;
    }
  return out;
}

/// |a - b| <= rel * max(|a|, |b|) + abs_floor
inline bool rel_close(double a, double b, double rel, double abs_floor = 1e-10) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

/// Central difference of f along coordinate i of x.
template <class T>
double central_difference(const std::function<double(const lmfap::Tensor<T>&)>& f, const lmfap::Tensor<T>& x,
                          std::size_t i, double h) {
  auto xp = x, xm = x;
  xp.data()[i] += T(h);
  xm.data()[i] -= T(h);
  return (f(xp) - f(xm)) / (2 * h);
}

template <class T = float>
lmfap::Tensor<T> random_image(lmfap::Rng& rng, std::size_t c = 3, std::size_t h = 112, std::size_t w = 112,
                              double lo = 0.0, double hi = 1.0) {
  lmfap::Tensor<T> img(1, c, h, w);
  for (auto& v : img.values()) v = static_cast<T>(lo + (hi - lo) * lmfap::uniform01(rng));
  return img;
}

/// Smooth random image: a few random cosines plus mild noise, in [0,1].
template <class T = float>
lmfap::Tensor<T> smooth_image(lmfap::Rng& rng, std::size_t c = 3, std::size_t side = 112) {
  lmfap::Tensor<T> img(1, c, side, side);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double base = 0.3 + 0.4 * lmfap::uniform01(rng);
    double fx[3], fy[3], ph[3], am[3];
    for (int k = 0; k < 3; ++k) {
      fx[k] = 0.02 + 0.1 * lmfap::uniform01(rng);
      fy[k] = 0.02 + 0.1 * lmfap::uniform01(rng);
      ph[k] = 6.28 * lmfap::uniform01(rng);
      am[k] = 0.08 * lmfap::uniform01(rng);
    }
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        double v = base + 0.02 * (lmfap::uniform01(rng) - 0.5);
        for (int k = 0; k < 3; ++k) v += am[k] * std::cos(fx[k] * double(x) * 6.28 + fy[k] * double(y) * 6.28 + ph[k]);
        img.at(ch, y, x) = static_cast<T>(std::clamp(v, 0.0, 1.0));
      }
  }
  return img;
}

template <class T>
lmfap::Embedder<T> tiny_embedder(const std::string& arch = "conv2-w4", std::size_t side = 16, std::size_t dim = 8,
                                 std::uint64_t seed = 3) {
  lmfap::ModelInfo info;
  info.architecture_id = arch;
  info.side = side;
  info.embedding_dim = dim;
  return lmfap::make_embedder<T>(info, seed);
}

struct LibjpegTables {
  std::vector<int> luma, chroma;  // natural order
};

namespace detail {
struct Err {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};
inline void on_error(j_common_ptr c) { std::longjmp(reinterpret_cast<Err*>(c->err)->jump, 1); }
}  // namespace detail

/// Quantization tables that libjpeg derives for a quality setting.
inline LibjpegTables libjpeg_tables(int quality) {
  jpeg_compress_struct cinfo{};
  detail::Err err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = detail::on_error;
  LibjpegTables t;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    return t;
  }
  jpeg_create_compress(&cinfo);
  cinfo.in_color_space = JCS_RGB;
  cinfo.input_components = 3;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  for (int k = 0; k < 64; ++k) {
    t.luma.push_back(cinfo.quant_tbl_ptrs[0]->quantval[k]);
    t.chroma.push_back(cinfo.quant_tbl_ptrs[1]->quantval[k]);
  }
  jpeg_destroy_compress(&cinfo);
  return t;
}

}  // namespace oracle
