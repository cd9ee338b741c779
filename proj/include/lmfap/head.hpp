#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "lmfap/embedder.hpp"
#include "lmfap/error.hpp"
#include "lmfap/nn/layers.hpp"
#include "lmfap/random.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

enum class HeadVariant { plain_softmax, angular_margin };

struct HeadConfig {
  HeadVariant variant = HeadVariant::angular_margin;
  double margin = 0.5;
  double scale = 64.0;
};

/// Training-time classifier h on top of the embedding. Dropped once training ends.
template <class T = float>
class SupervisoryHead {
 public:
  SupervisoryHead(HeadConfig cfg, std::size_t num_classes, std::size_t dim, std::uint64_t seed = 0)
      : cfg_(cfg), classes_(num_classes), dim_(dim) {
    weight_ = {"head.weight", {num_classes, dim}, std::vector<T>(num_classes * dim)};
    bias_ = {"head.bias", {num_classes}, std::vector<T>(num_classes, T(0)), true, false};
    Rng rng = derive_rng(seed, stream_id("head"));
    const double sd = std::sqrt(1.0 / double(dim));
    for (auto& v : weight_.value) v = static_cast<T>(normal01(rng) * sd);
  }

  const HeadConfig& config() const noexcept { return cfg_; }
  std::size_t num_classes() const noexcept { return classes_; }
  std::size_t dim() const noexcept { return dim_; }
  nn::Param<T>& weight() noexcept { return weight_; }
  nn::Param<T>& bias() noexcept { return bias_; }

  std::vector<nn::Param<T>*> params() {
    if (cfg_.variant == HeadVariant::plain_softmax) return {&weight_, &bias_};
    return {&weight_};
  }

  struct Trace {
    Tensor<T> emb;
    std::vector<T> emb_norm, w_norm, cos;  // cos is N x K
    std::vector<std::size_t> labels;
  };

  /// Logits (N x K, row-major) for embeddings shaped (N, l, 1, 1).
  std::vector<T> forward(const Tensor<T>& emb, std::span<const std::size_t> labels, Trace* trace = nullptr) const {
    const std::size_t n = emb.batch();
    if (emb.sample_size() != dim_) throw ShapeMismatch("head: embedding length mismatch");
    if (labels.size() != n) throw ShapeMismatch("head: one label per embedding required");
    for (auto y : labels)
      if (y >= classes_) throw LabelOutOfRange("label " + std::to_string(y) + " >= " + std::to_string(classes_));
    std::vector<T> logits(n * classes_);
    if (cfg_.variant == HeadVariant::plain_softmax) {
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t k = 0; k < classes_; ++k) {
          double s = bias_.value[k];
          for (std::size_t i = 0; i < dim_; ++i) s += double(weight_.value[k * dim_ + i]) * emb[b * dim_ + i];
          logits[b * classes_ + k] = static_cast<T>(s);
        }
      if (trace) *trace = Trace{emb, {}, {}, {}, {labels.begin(), labels.end()}};
      return logits;
    }
    std::vector<T> en(n), wn(classes_), cos(n * classes_);
    for (std::size_t k = 0; k < classes_; ++k) wn[k] = norm(&weight_.value[k * dim_]);
    for (std::size_t b = 0; b < n; ++b) {
      en[b] = norm(&emb[b * dim_]);
      for (std::size_t k = 0; k < classes_; ++k) {
        double s = 0;
        for (std::size_t i = 0; i < dim_; ++i) s += double(weight_.value[k * dim_ + i]) * emb[b * dim_ + i];
        const T c = std::clamp(static_cast<T>(s / (double(en[b]) * wn[k])), T(-1), T(1));
        cos[b * classes_ + k] = c;
        logits[b * classes_ + k] = static_cast<T>(cfg_.scale) * (k == labels[b] ? margin_cos(c) : c);
      }
    }
    if (trace) *trace = Trace{emb, en, wn, cos, {labels.begin(), labels.end()}};
    return logits;
  }

  /// d(embeddings) from d(logits); parameter gradients accumulate into grads.
  Tensor<T> backward(const Trace& tr, std::span<const T> d_logits, Gradients<T>* grads = nullptr) const {
    const std::size_t n = tr.emb.batch();
    Tensor<T> d_emb(n, dim_, 1, 1);
    if (cfg_.variant == HeadVariant::plain_softmax) {
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t k = 0; k < classes_; ++k) {
          const T g = d_logits[b * classes_ + k];
          if (g == T(0)) continue;
          for (std::size_t i = 0; i < dim_; ++i) {
            d_emb[b * dim_ + i] += g * weight_.value[k * dim_ + i];
            if (grads) (*grads)[0][k * dim_ + i] += g * tr.emb[b * dim_ + i];
          }
          if (grads) (*grads)[1][k] += g;
        }
      return d_emb;
    }
    for (std::size_t b = 0; b < n; ++b) {
      const T* e = &tr.emb[b * dim_];
      const T en = tr.emb_norm[b];
      for (std::size_t k = 0; k < classes_; ++k) {
        const T c = tr.cos[b * classes_ + k];
        T g = d_logits[b * classes_ + k] * static_cast<T>(cfg_.scale);
        if (k == tr.labels[b]) g *= margin_cos_derivative(c);
        if (g == T(0)) continue;
        const T* w = &weight_.value[k * dim_];
        const T wn = tr.w_norm[k];
        for (std::size_t i = 0; i < dim_; ++i) {
          const T eh = e[i] / en, wh = w[i] / wn;
          d_emb[b * dim_ + i] += g * (wh - c * eh) / en;
          if (grads) (*grads)[0][k * dim_ + i] += g * (eh - c * wh) / wn;
        }
      }
    }
    return d_emb;
  }

  /// cos(theta + m), with the usual linear continuation once theta + m passes pi.
  T margin_cos(T c) const {
    const double m = cfg_.margin;
    if (m == 0) return c;
    const double s = std::sqrt(std::max(0.0, 1.0 - double(c) * c));
    if (c > std::cos(std::numbers::pi - m)) return static_cast<T>(c * std::cos(m) - s * std::sin(m));
    return static_cast<T>(c - std::sin(std::numbers::pi - m) * m);
  }

  T margin_cos_derivative(T c) const {
    const double m = cfg_.margin;
    if (m == 0) return T(1);
    if (c > std::cos(std::numbers::pi - m)) {
      const double s = std::max(1e-6, std::sqrt(std::max(0.0, 1.0 - double(c) * c)));
      return static_cast<T>(std::cos(m) + std::sin(m) * c / s);
    }
    return T(1);
  }

 private:
  T norm(const T* v) const {
    double s = 0;
    for (std::size_t i = 0; i < dim_; ++i) s += double(v[i]) * v[i];
    return static_cast<T>(std::max(std::sqrt(s), 1e-12));
  }

  HeadConfig cfg_;
  std::size_t classes_, dim_;
  nn::Param<T> weight_, bias_;
};

/// Logits of the head for one embedding.
template <class T>
std::vector<T> head_forward(const SupervisoryHead<T>& head, std::span<const T> embedding, std::size_t label) {
  Tensor<T> e(1, embedding.size(), 1, 1);
  std::copy(embedding.begin(), embedding.end(), e.data());
  const std::size_t labels[1] = {label};
  return head.forward(e, labels);
}

/// Mean softmax cross-entropy; d_logits receives the gradient of the mean.
template <class T>
double softmax_cross_entropy(std::span<const T> logits, std::span<const std::size_t> labels, std::size_t classes,
                             std::vector<T>* d_logits = nullptr, std::vector<double>* per_sample = nullptr) {
  const std::size_t n = labels.size();
  if (d_logits) d_logits->assign(n * classes, T(0));
  if (per_sample) per_sample->assign(n, 0.0);
  double total = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const T* z = &logits[b * classes];
    const double mx = *std::max_element(z, z + classes);
    double se = 0;
    for (std::size_t k = 0; k < classes; ++k) se += std::exp(double(z[k]) - mx);
    const double loss = std::log(se) + mx - double(z[labels[b]]);
    total += loss;
    if (per_sample) (*per_sample)[b] = loss;
    if (d_logits)
      for (std::size_t k = 0; k < classes; ++k) {
        const double p = std::exp(double(z[k]) - mx) / se;
        (*d_logits)[b * classes + k] = static_cast<T>((p - (k == labels[b] ? 1.0 : 0.0)) / double(n));
      }
  }
  return n ? total / double(n) : 0.0;
}

}  // namespace lmfap
