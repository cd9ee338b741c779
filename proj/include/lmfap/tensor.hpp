#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lmfap/error.hpp"

namespace lmfap {

/// Dense NCHW array. A single image is a tensor with n == 1; its pixels live
/// in planar channel-major order.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : n_(n), c_(c), h_(h), w_(w), data_(n * c * h * w, fill) {}

  static Tensor image(std::size_t c, std::size_t h, std::size_t w, T fill = T(0)) {
    return Tensor(1, c, h, w, fill);
  }

  std::size_t batch() const noexcept { return n_; }
  std::size_t channels() const noexcept { return c_; }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane() const noexcept { return h_ * w_; }
  std::size_t sample_size() const noexcept { return c_ * h_ * w_; }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t c, std::size_t y, std::size_t x) noexcept { return data_[(c * h_ + y) * w_ + x]; }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * h_ + y) * w_ + x];
  }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[((n * c_ + c) * h_ + y) * w_ + x];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[((n * c_ + c) * h_ + y) * w_ + x];
  }

  std::span<T> sample(std::size_t n) noexcept { return {data_.data() + n * sample_size(), sample_size()}; }
  std::span<const T> sample(std::size_t n) const noexcept {
    return {data_.data() + n * sample_size(), sample_size()};
  }
  std::span<T> channel(std::size_t c) noexcept { return {data_.data() + c * plane(), plane()}; }
  std::span<const T> channel(std::size_t c) const noexcept { return {data_.data() + c * plane(), plane()}; }

  /// Copy of sample n as a standalone single-sample tensor.
  Tensor slice(std::size_t n) const {
    Tensor out(1, c_, h_, w_);
    std::copy(sample(n).begin(), sample(n).end(), out.data_.begin());
    return out;
  }

  bool same_shape(const Tensor& o) const noexcept {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  bool same_sample_shape(const Tensor& o) const noexcept { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(n_, c_, h_, w_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  Tensor& operator+=(const Tensor& o) {
    require_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, T s) { return a *= s; }

  bool operator==(const Tensor& o) const = default;

  std::string shape_string() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
  }

  void require_same(const Tensor& o, const char* op) const {
    if (!same_shape(o)) throw ShapeMismatch(std::string(op) + ": " + shape_string() + " vs " + o.shape_string());
  }

 private:
  std::size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

using Image = Tensor<float>;

template <class T>
T max_abs(const Tensor<T>& t) {
  T m = 0;
  for (T v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same(b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class T>
double mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same(b, "mean_abs_diff");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(a[i]) - double(b[i]));
  return a.size() ? s / double(a.size()) : 0.0;
}

template <class T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template <class T>
bool in_unit_range(const Tensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](T v) { return v >= T(0) && v <= T(1); });
}

template <class T>
void clip_unit(Tensor<T>& t) {
  for (auto& v : t.storage()) v = std::clamp(v, T(0), T(1));
}

/// Rounds every element to the nearest 8-bit level, as persisting to an 8-bit raster would.
template <class T>
void quantize_8bit(Tensor<T>& t) {
  for (auto& v : t.storage()) v = std::round(std::clamp(v, T(0), T(1)) * T(255)) / T(255);
}

/// Stacks equally shaped single images into one batch.
template <class T>
Tensor<T> stack(std::span<const Tensor<T>> images) {
  if (images.empty()) return {};
  const auto& f = images.front();
  Tensor<T> out(images.size(), f.channels(), f.height(), f.width());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_sample_shape(f) || images[i].batch() != 1)
      throw ShapeMismatch("stack: inconsistent image shapes");
    std::copy(images[i].values().begin(), images[i].values().end(), out.sample(i).begin());
  }
  return out;
}

}  // namespace lmfap
