#pragma once

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lmfap/error.hpp"
#include "lmfap/random.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<Matrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const Matrix<T>>;

/// How normalization layers treat statistics.
enum class Mode {
  inference,    // running statistics, nothing recorded
  training,     // batch statistics; caller may commit them to the running averages
  batch_frozen  // batch statistics, running averages left untouched
};

template <class T>
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  bool trainable = true;
  bool decay = true;  // subject to weight decay
};

struct Shape {
  std::size_t c = 0, h = 0, w = 0;
  bool operator==(const Shape&) const = default;
};

template <class T>
struct LayerCache {
  Tensor<T> saved;       // layer-specific: input, output, columns or normalized activations
  std::vector<T> stats;  // layer-specific per-channel values
  Shape in_shape;
};

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Shape output_shape(Shape in) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& in, Mode mode, LayerCache<T>& cache) const = 0;
  /// Accumulates into grads (aligned with params(); may be empty) and returns
  /// d(input) when need_input is set.
  virtual Tensor<T> backward(const Tensor<T>& grad_out, const LayerCache<T>& cache,
                             std::span<std::vector<T>> grads, bool need_input) const = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::vector<const Param<T>*> params() const { return {}; }
  virtual void commit_statistics(const LayerCache<T>&, T /*momentum*/) {}
  virtual std::unique_ptr<Layer> clone() const = 0;
};

// ---------------------------------------------------------------------------

template <class T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
         std::size_t pad)
      : cin_(in_ch), cout_(out_ch), k_(kernel), stride_(stride), pad_(pad) {
    weight_ = {name + ".weight", {out_ch, in_ch, kernel, kernel}, std::vector<T>(out_ch * in_ch * kernel * kernel)};
  }

  void init(Rng& rng) {
    const double sd = std::sqrt(2.0 / double(cin_ * k_ * k_));
    for (auto& v : weight_.value) v = static_cast<T>(normal01(rng) * sd);
  }

  std::string kind() const override { return "conv2d"; }
  Shape output_shape(Shape in) const override {
    return {cout_, (in.h + 2 * pad_ - k_) / stride_ + 1, (in.w + 2 * pad_ - k_) / stride_ + 1};
  }

  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>& cache) const override {
    if (in.channels() != cin_) throw ShapeMismatch("conv2d: channel mismatch");
    const Shape is{in.channels(), in.height(), in.width()};
    const Shape os = output_shape(is);
    const std::size_t n = in.batch(), p = os.h * os.w, kk = cin_ * k_ * k_;
    cache.in_shape = is;
    cache.saved = Tensor<T>(1, 1, kk, n * p);
    auto* col = cache.saved.data();
    const std::size_t cols = n * p;
    for (std::size_t ci = 0; ci < cin_; ++ci)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          T* row = col + ((ci * k_ + ky) * k_ + kx) * cols;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t oy = 0; oy < os.h; ++oy) {
              const long iy = long(oy * stride_ + ky) - long(pad_);
              T* dst = row + b * p + oy * os.w;
              if (iy < 0 || iy >= long(is.h)) {
                std::fill(dst, dst + os.w, T(0));
                continue;
              }
              const T* src = &in.at(b, ci, std::size_t(iy), 0);
              for (std::size_t ox = 0; ox < os.w; ++ox) {
                const long ix = long(ox * stride_ + kx) - long(pad_);
                dst[ox] = (ix < 0 || ix >= long(is.w)) ? T(0) : src[ix];
              }
            }
        }
    ConstMatrixMap<T> w(weight_.value.data(), cout_, kk);
    ConstMatrixMap<T> c(col, kk, cols);
    Matrix<T> y = w * c;
    Tensor<T> out(n, cout_, os.h, os.w);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t co = 0; co < cout_; ++co)
        std::copy_n(y.data() + co * cols + b * p, p, &out.at(b, co, 0, 0));
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, const LayerCache<T>& cache, std::span<std::vector<T>> grads,
                     bool need_input) const override {
    const Shape is = cache.in_shape;
    const Shape os = output_shape(is);
    const std::size_t n = grad_out.batch(), p = os.h * os.w, kk = cin_ * k_ * k_, cols = n * p;
    Matrix<T> dy(cout_, cols);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t co = 0; co < cout_; ++co)
        std::copy_n(&grad_out.at(b, co, 0, 0), p, dy.data() + co * cols + b * p);
    ConstMatrixMap<T> c(cache.saved.data(), kk, cols);
    if (!grads.empty()) {
      MatrixMap<T> dw(grads[0].data(), cout_, kk);
      dw.noalias() += dy * c.transpose();
    }
    if (!need_input) return {};
    ConstMatrixMap<T> w(weight_.value.data(), cout_, kk);
    Matrix<T> dcol = w.transpose() * dy;
    Tensor<T> din(n, is.c, is.h, is.w);
    for (std::size_t ci = 0; ci < cin_; ++ci)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const T* row = dcol.data() + ((ci * k_ + ky) * k_ + kx) * cols;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t oy = 0; oy < os.h; ++oy) {
              const long iy = long(oy * stride_ + ky) - long(pad_);
              if (iy < 0 || iy >= long(is.h)) continue;
              const T* src = row + b * p + oy * os.w;
              T* dst = &din.at(b, ci, std::size_t(iy), 0);
              for (std::size_t ox = 0; ox < os.w; ++ox) {
                const long ix = long(ox * stride_ + kx) - long(pad_);
                if (ix >= 0 && ix < long(is.w)) dst[ix] += src[ox];
              }
            }
        }
    return din;
  }

  std::vector<Param<T>*> params() override { return {&weight_}; }
  std::vector<const Param<T>*> params() const override { return {&weight_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

 private:
  std::size_t cin_, cout_, k_, stride_, pad_;
  Param<T> weight_;
};

// ---------------------------------------------------------------------------

/// Per-channel normalization over batch and spatial positions.
template <class T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string name, std::size_t channels) : c_(channels) {
    gamma_ = {name + ".gamma", {channels}, std::vector<T>(channels, T(1)), true, false};
    beta_ = {name + ".beta", {channels}, std::vector<T>(channels, T(0)), true, false};
    mean_ = {name + ".running_mean", {channels}, std::vector<T>(channels, T(0)), false, false};
    var_ = {name + ".running_var", {channels}, std::vector<T>(channels, T(1)), false, false};
  }

  static constexpr double kEps = 1e-5;

  std::string kind() const override { return "batchnorm"; }
  Shape output_shape(Shape in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& in, Mode mode, LayerCache<T>& cache) const override {
    if (in.channels() != c_) throw ShapeMismatch("batchnorm: channel mismatch");
    const std::size_t n = in.batch(), hw = in.plane();
    const double m = double(n * hw);
    cache.in_shape = {in.channels(), in.height(), in.width()};
    cache.saved = Tensor<T>(n, c_, in.height(), in.width());
    // stats layout: [inv_std(c), batch_mean(c), batch_var(c)], last flag = mode
    cache.stats.assign(3 * c_ + 1, T(0));
    cache.stats[3 * c_] = mode == Mode::inference ? T(0) : T(1);
    Tensor<T> out(n, c_, in.height(), in.width());
    for (std::size_t c = 0; c < c_; ++c) {
      double mean, var;
      if (mode == Mode::inference) {
        mean = mean_.value[c];
        var = var_.value[c];
      } else {
        double s = 0, s2 = 0;
        for (std::size_t b = 0; b < n; ++b) {
          const T* x = &in.at(b, c, 0, 0);
          for (std::size_t i = 0; i < hw; ++i) s += x[i];
        }
        mean = s / m;
        for (std::size_t b = 0; b < n; ++b) {
          const T* x = &in.at(b, c, 0, 0);
          for (std::size_t i = 0; i < hw; ++i) s2 += (x[i] - mean) * (x[i] - mean);
        }
        var = s2 / m;
      }
      const double inv = 1.0 / std::sqrt(var + kEps);
      cache.stats[c] = static_cast<T>(inv);
      cache.stats[c_ + c] = static_cast<T>(mean);
      cache.stats[2 * c_ + c] = static_cast<T>(var);
      const T g = gamma_.value[c], be = beta_.value[c];
      for (std::size_t b = 0; b < n; ++b) {
        const T* x = &in.at(b, c, 0, 0);
        T* xh = &cache.saved.at(b, c, 0, 0);
        T* y = &out.at(b, c, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) {
          xh[i] = static_cast<T>((x[i] - mean) * inv);
          y[i] = g * xh[i] + be;
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, const LayerCache<T>& cache, std::span<std::vector<T>> grads,
                     bool need_input) const override {
    const std::size_t n = grad_out.batch(), hw = grad_out.plane();
    const double m = double(n * hw);
    const bool batch_stats = cache.stats[3 * c_] != T(0);
    Tensor<T> din;
    if (need_input) din = Tensor<T>(n, c_, grad_out.height(), grad_out.width());
    for (std::size_t c = 0; c < c_; ++c) {
      double sdy = 0, sdyx = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* dy = &grad_out.at(b, c, 0, 0);
        const T* xh = &cache.saved.at(b, c, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) {
          sdy += dy[i];
          sdyx += double(dy[i]) * xh[i];
        }
      }
      if (!grads.empty()) {
        grads[0][c] += static_cast<T>(sdyx);
        grads[1][c] += static_cast<T>(sdy);
      }
      if (!need_input) continue;
      const double g = gamma_.value[c], inv = cache.stats[c];
      for (std::size_t b = 0; b < n; ++b) {
        const T* dy = &grad_out.at(b, c, 0, 0);
        const T* xh = &cache.saved.at(b, c, 0, 0);
        T* dx = &din.at(b, c, 0, 0);
        if (batch_stats) {
          const double k = g * inv / m;
          for (std::size_t i = 0; i < hw; ++i) dx[i] = static_cast<T>(k * (m * dy[i] - sdy - xh[i] * sdyx));
        } else {
          for (std::size_t i = 0; i < hw; ++i) dx[i] = static_cast<T>(g * inv * dy[i]);
        }
      }
    }
    return din;
  }

  void commit_statistics(const LayerCache<T>& cache, T momentum) override {
    if (cache.stats[3 * c_] == T(0)) return;
    const double m = double(cache.saved.batch() * cache.saved.plane());
    const double unbias = m > 1 ? m / (m - 1) : 1.0;
    for (std::size_t c = 0; c < c_; ++c) {
      mean_.value[c] = (1 - momentum) * mean_.value[c] + momentum * cache.stats[c_ + c];
      var_.value[c] = static_cast<T>((1 - momentum) * var_.value[c] + momentum * cache.stats[2 * c_ + c] * unbias);
    }
  }

  std::vector<Param<T>*> params() override { return {&gamma_, &beta_, &mean_, &var_}; }
  std::vector<const Param<T>*> params() const override { return {&gamma_, &beta_, &mean_, &var_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm>(*this); }

 private:
  std::size_t c_;
  Param<T> gamma_, beta_, mean_, var_;
};

// ---------------------------------------------------------------------------

template <class T>
class Relu final : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(Shape in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>& cache) const override {
    Tensor<T> out = in;
    for (auto& v : out.storage()) v = v > T(0) ? v : T(0);
    cache.saved = out;
    return out;
  }
  Tensor<T> backward(const Tensor<T>& grad_out, const LayerCache<T>& cache, std::span<std::vector<T>>,
                     bool need_input) const override {
    if (!need_input) return {};
    Tensor<T> din = grad_out;
    for (std::size_t i = 0; i < din.size(); ++i)
      if (!(cache.saved[i] > T(0))) din[i] = T(0);
    return din;
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Relu>(*this); }
};

template <class T>
class Flatten final : public Layer<T> {
 public:
  std::string kind() const override { return "flatten"; }
  Shape output_shape(Shape in) const override { return {in.c * in.h * in.w, 1, 1}; }
  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>& cache) const override {
    cache.in_shape = {in.channels(), in.height(), in.width()};
    Tensor<T> out(in.batch(), in.sample_size(), 1, 1);
    std::copy(in.values().begin(), in.values().end(), out.data());
    return out;
  }
  Tensor<T> backward(const Tensor<T>& grad_out, const LayerCache<T>& cache, std::span<std::vector<T>>,
                     bool need_input) const override {
    if (!need_input) return {};
    const auto s = cache.in_shape;
    Tensor<T> din(grad_out.batch(), s.c, s.h, s.w);
    std::copy(grad_out.values().begin(), grad_out.values().end(), din.data());
    return din;
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten>(*this); }
};

/// Fully connected layer on flattened (N, F, 1, 1) inputs.
template <class T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, std::size_t in, std::size_t out) : in_(in), out_(out) {
    weight_ = {name + ".weight", {out, in}, std::vector<T>(out * in)};
    bias_ = {name + ".bias", {out}, std::vector<T>(out, T(0)), true, false};
  }

  void init(Rng& rng, double gain = 2.0) {
    const double sd = std::sqrt(gain / double(in_));
    for (auto& v : weight_.value) v = static_cast<T>(normal01(rng) * sd);
  }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  std::string kind() const override { return "linear"; }
  Shape output_shape(Shape in) const override {
    (void)in;
    return {out_, 1, 1};
  }
  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>& cache) const override {
    if (in.sample_size() != in_) throw ShapeMismatch("linear: expected " + std::to_string(in_) + " features");
    cache.saved = in;
    ConstMatrixMap<T> x(in.data(), in.batch(), in_);
    ConstMatrixMap<T> w(weight_.value.data(), out_, in_);
    Tensor<T> out(in.batch(), out_, 1, 1);
    MatrixMap<T> y(out.data(), in.batch(), out_);
    y.noalias() = x * w.transpose();
    for (std::size_t b = 0; b < in.batch(); ++b)
      for (std::size_t o = 0; o < out_; ++o) y(b, o) += bias_.value[o];
    return out;
  }
  Tensor<T> backward(const Tensor<T>& grad_out, const LayerCache<T>& cache, std::span<std::vector<T>> grads,
                     bool need_input) const override {
    const std::size_t n = grad_out.batch();
    ConstMatrixMap<T> dy(grad_out.data(), n, out_);
    if (!grads.empty()) {
      ConstMatrixMap<T> x(cache.saved.data(), n, in_);
      MatrixMap<T> dw(grads[0].data(), out_, in_);
      dw.noalias() += dy.transpose() * x;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < out_; ++o) grads[1][o] += dy(b, o);
    }
    if (!need_input) return {};
    ConstMatrixMap<T> w(weight_.value.data(), out_, in_);
    Tensor<T> din(n, cache.saved.channels(), cache.saved.height(), cache.saved.width());
    MatrixMap<T> dx(din.data(), n, in_);
    dx.noalias() = dy * w;
    return din;
  }
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Param<T>*> params() const override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Linear>(*this); }

 private:
  std::size_t in_, out_;
  Param<T> weight_, bias_;
};

}  // namespace lmfap::nn
