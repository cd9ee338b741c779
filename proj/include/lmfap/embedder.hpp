#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <regex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmfap/error.hpp"
#include "lmfap/nn/layers.hpp"
#include "lmfap/random.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

inline constexpr std::size_t kDefaultEmbeddingDim = 128;
inline constexpr const char* kDefaultArchitecture = "conv4-w16";

struct Provenance {
  enum class Kind { standard, robust };
  Kind kind = Kind::standard;
  double radius = 0;  // 0-255 pixel units
  int epochs = 0;

  bool robust() const noexcept { return kind == Kind::robust; }
  static Provenance standard(int epochs = 0) { return {Kind::standard, 0, epochs}; }
  static Provenance make_robust(double radius, int epochs) { return {Kind::robust, radius, epochs}; }
};

struct ModelInfo {
  std::string architecture_id = kDefaultArchitecture;
  std::size_t channels = 3;
  std::size_t side = 112;
  std::size_t embedding_dim = kDefaultEmbeddingDim;
  Provenance provenance;
  std::string config_digest;
  std::string config_json = "{}";  // training config that produced the weights
};

template <class T>
using Gradients = std::vector<std::vector<T>>;

/// Differentiable backbone f mapping a C x side x side image to an l-vector.
/// Immutable during inference: every forward/backward pass keeps its state in
/// a caller-owned Trace, so concurrent calls on a shared model are safe.
template <class T = float>
class Embedder {
 public:
  using Layers = std::vector<std::unique_ptr<nn::Layer<T>>>;

  struct Trace {
    std::vector<nn::LayerCache<T>> caches;
  };

  Embedder() = default;
  Embedder(ModelInfo info, Layers layers) : info_(std::move(info)), layers_(std::move(layers)) {}
  Embedder(const Embedder& o) : info_(o.info_) {
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
  }
  Embedder& operator=(const Embedder& o) {
    if (this != &o) *this = Embedder(o);
    return *this;
  }
  Embedder(Embedder&&) noexcept = default;
  Embedder& operator=(Embedder&&) noexcept = default;

  const ModelInfo& info() const noexcept { return info_; }
  ModelInfo& info() noexcept { return info_; }
  std::size_t embedding_dim() const noexcept { return info_.embedding_dim; }
  const Layers& layers() const noexcept { return layers_; }

  void check_input(const Tensor<T>& x) const {
    if (x.channels() != info_.channels || x.height() != info_.side || x.width() != info_.side)
      throw ShapeMismatch("model " + info_.architecture_id + " expects " + std::to_string(info_.channels) + "x" +
                          std::to_string(info_.side) + "x" + std::to_string(info_.side) + " input, got " +
                          x.shape_string());
  }

  /// Embeddings as an (N, l, 1, 1) tensor.
  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode = nn::Mode::inference, Trace* trace = nullptr) const {
    check_input(x);
    Trace local;
    Trace& tr = trace ? *trace : local;
    tr.caches.assign(layers_.size(), {});
    Tensor<T> a = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) a = layers_[i]->forward(a, mode, tr.caches[i]);
    return a;
  }

  /// Back-propagates d(embeddings). Parameter gradients accumulate into grads
  /// when given; returns d(input) when need_input is set.
  Tensor<T> backward(const Trace& trace, const Tensor<T>& grad_emb, Gradients<T>* grads = nullptr,
                     bool need_input = true) const {
    std::vector<std::size_t> offset(layers_.size() + 1, 0);
    for (std::size_t i = 0; i < layers_.size(); ++i) offset[i + 1] = offset[i] + layers_[i]->params().size();
    Tensor<T> g = grad_emb;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      std::span<std::vector<T>> lg;
      if (grads && offset[k + 1] > offset[k]) lg = std::span(grads->data() + offset[k], offset[k + 1] - offset[k]);
      const bool need = need_input || k > 0;
      g = layers_[k]->backward(g, trace.caches[k], lg, need);
    }
    return g;
  }

  std::vector<nn::Param<T>*> params() {
    std::vector<nn::Param<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }
  std::vector<const nn::Param<T>*> params() const {
    std::vector<const nn::Param<T>*> out;
    for (const auto& l : layers_)
      for (const auto* p : std::as_const(*l).params()) out.push_back(p);
    return out;
  }

  Gradients<T> zero_gradients() const {
    Gradients<T> g;
    for (const auto* p : params()) g.emplace_back(p->value.size(), T(0));
    return g;
  }

  void commit_statistics(const Trace& trace, T momentum = T(0.1)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->commit_statistics(trace.caches[i], momentum);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params()) n += p->value.size();
    return n;
  }

  template <class U>
  Embedder<U> cast() const;

 private:
  ModelInfo info_;
  Layers layers_;
};

// ---------------------------------------------------------------------------
// Architecture registry

/// Builds the layer stack for an architecture id:
///   conv<B>-w<W>  B blocks of 3x3/2 conv-norm-relu (widths W, 2W, ...), then fc + norm
///   mlp-h<H>      flatten, fc(H), relu, fc(l)
///   linear        flatten, fc(l)
template <class T>
Embedder<T> make_embedder(ModelInfo info, std::uint64_t seed = 0) {
  Rng rng = derive_rng(seed, stream_id("init:" + info.architecture_id));
  typename Embedder<T>::Layers layers;
  nn::Shape shape{info.channels, info.side, info.side};
  const std::string& id = info.architecture_id;
  std::smatch m;
  if (std::regex_match(id, m, std::regex(R"(conv(\d+)-w(\d+))"))) {
    const std::size_t blocks = std::stoul(m[1]), width = std::stoul(m[2]);
    if (blocks == 0 || width == 0) throw UnknownArchitecture(id);
    std::size_t ch = width;
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::string name = "block" + std::to_string(b);
      auto conv = std::make_unique<nn::Conv2d<T>>(name + ".conv", shape.c, ch, 3, 2, 1);
      conv->init(rng);
      shape = conv->output_shape(shape);
      layers.push_back(std::move(conv));
      layers.push_back(std::make_unique<nn::BatchNorm<T>>(name + ".bn", ch));
      layers.push_back(std::make_unique<nn::Relu<T>>());
      ch *= 2;
    }
    layers.push_back(std::make_unique<nn::Flatten<T>>());
    auto fc = std::make_unique<nn::Linear<T>>("fc", shape.c * shape.h * shape.w, info.embedding_dim);
    fc->init(rng, 1.0);
    layers.push_back(std::move(fc));
    layers.push_back(std::make_unique<nn::BatchNorm<T>>("fc.bn", info.embedding_dim));
  } else if (std::regex_match(id, m, std::regex(R"(mlp-h(\d+))"))) {
    const std::size_t hidden = std::stoul(m[1]);
    layers.push_back(std::make_unique<nn::Flatten<T>>());
    auto l1 = std::make_unique<nn::Linear<T>>("l1", shape.c * shape.h * shape.w, hidden);
    l1->init(rng);
    layers.push_back(std::move(l1));
    layers.push_back(std::make_unique<nn::Relu<T>>());
    auto l2 = std::make_unique<nn::Linear<T>>("l2", hidden, info.embedding_dim);
    l2->init(rng, 1.0);
    layers.push_back(std::move(l2));
  } else if (id == "linear") {
    layers.push_back(std::make_unique<nn::Flatten<T>>());
    auto l1 = std::make_unique<nn::Linear<T>>("l1", shape.c * shape.h * shape.w, info.embedding_dim);
    l1->init(rng, 1.0);
    layers.push_back(std::move(l1));
  } else {
    throw UnknownArchitecture("unknown architecture id '" + id + "'");
  }
  return Embedder<T>(std::move(info), std::move(layers));
}

template <class T>
template <class U>
Embedder<U> Embedder<T>::cast() const {
  auto out = make_embedder<U>(info_);
  auto dst = out.params();
  auto src = params();
  for (std::size_t i = 0; i < src.size(); ++i)
    std::transform(src[i]->value.begin(), src[i]->value.end(), dst[i]->value.begin(),
                   [](T v) { return static_cast<U>(v); });
  return out;
}

// ---------------------------------------------------------------------------
// Verification primitives

template <class T>
T euclidean(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeMismatch("embedding length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return static_cast<T>(std::sqrt(s));
}

/// Inference-mode embedding of a single image.
template <class T>
std::vector<T> embed(const Embedder<T>& model, const Tensor<T>& img) {
  if (img.batch() != 1) throw ShapeMismatch("embed expects a single image");
  auto e = model.forward(img);
  return e.storage();
}

/// Inference-mode embeddings of every sample in a batch, one vector each.
template <class T>
std::vector<std::vector<T>> embed_all(const Embedder<T>& model, const Tensor<T>& batch) {
  auto e = model.forward(batch);
  std::vector<std::vector<T>> out;
  for (std::size_t n = 0; n < e.batch(); ++n) out.emplace_back(e.sample(n).begin(), e.sample(n).end());
  return out;
}

template <class T>
T pair_distance(const Embedder<T>& model, const Tensor<T>& x, const Tensor<T>& x_e) {
  const auto a = embed(model, x), b = embed(model, x_e);
  return euclidean<T>(a, b);
}

struct VerificationRule {
  double threshold = 0;  // Euclidean embedding distance

  explicit VerificationRule(double tau = 0) : threshold(tau) {
    if (!(tau >= 0)) throw InvalidConfig("verification threshold must be >= 0");
  }
  bool same(double distance) const noexcept { return distance < threshold; }
};

enum class Decision { same, different };

template <class T>
Decision verify(const Embedder<T>& model, const VerificationRule& rule, const Tensor<T>& x, const Tensor<T>& x_e) {
  return rule.same(pair_distance(model, x, x_e)) ? Decision::same : Decision::different;
}

/// Attack objective: the Euclidean embedding distance, which attacks ascend.
template <class T>
T attack_loss(const Embedder<T>& model, const Tensor<T>& x, const Tensor<T>& x_e) {
  return pair_distance(model, x, x_e);
}

template <class T>
struct DistanceGradient {
  Tensor<T> grad;       // same shape as the probe batch
  std::vector<T> loss;  // distance per sample
};

/// Gradient of ||f(x_n) - target|| w.r.t. each sample x_n of a batch. The
/// gradient at zero distance is defined as zero.
template <class T>
DistanceGradient<T> distance_gradient(const Embedder<T>& model, const Tensor<T>& probes,
                                      std::span<const T> target) {
  if (target.size() != model.embedding_dim()) throw ShapeMismatch("target embedding length mismatch");
  typename Embedder<T>::Trace trace;
  const auto emb = model.forward(probes, nn::Mode::inference, &trace);
  Tensor<T> d_emb(emb.batch(), emb.channels(), 1, 1);
  DistanceGradient<T> out;
  out.loss.resize(emb.batch());
  for (std::size_t n = 0; n < emb.batch(); ++n) {
    const auto e = emb.sample(n);
    const T dist = euclidean<T>(e, target);
    out.loss[n] = dist;
    if (dist > T(0))
      for (std::size_t i = 0; i < e.size(); ++i) d_emb.at(n, i, 0, 0) = (e[i] - target[i]) / dist;
  }
  out.grad = model.backward(trace, d_emb);
  if (!all_finite<T>(out.grad.values())) throw NonFiniteGradient("non-finite input gradient");
  return out;
}

/// d attack_loss / d x for a single probe, x_e held fixed.
template <class T>
Tensor<T> input_gradient(const Embedder<T>& model, const Tensor<T>& x, const Tensor<T>& x_e) {
  if (x.batch() != 1 || !x.same_shape(x_e)) throw ShapeMismatch("input_gradient expects two single images");
  const auto target = embed(model, x_e);
  return distance_gradient<T>(model, x, target).grad;
}

}  // namespace lmfap
