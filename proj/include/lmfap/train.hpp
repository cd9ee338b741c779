#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmfap/dataset.hpp"
#include "lmfap/digest.hpp"
#include "lmfap/embedder.hpp"
#include "lmfap/error.hpp"
#include "lmfap/head.hpp"
#include "lmfap/random.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

/// Recipe for standard (radius 0) or adversarial training. Radii and step
/// sizes are in 0-255 pixel units.
struct TrainConfig {
  double radius = 0;
  int epochs = 20;
  int inner_steps = 5;
  double inner_step_size = 0;  // 0 selects radius / 3
  double lr = 0.1;
  std::vector<int> lr_milestones;  // lr is divided by 10 at each listed epoch
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  bool hflip = true;
  std::string dataset_id;
  HeadConfig head;
  std::string architecture = kDefaultArchitecture;
  std::size_t embedding_dim = kDefaultEmbeddingDim;
  std::uint64_t seed = 0;

  static TrainConfig standard(int epochs = 20) {
    TrainConfig c;
    c.epochs = epochs;
    return c;
  }
  static TrainConfig prime() {
    TrainConfig c;
    c.radius = 4;
    c.epochs = 50;
    c.lr_milestones = {30, 45};
    return c;
  }
  static TrainConfig subprime() {
    TrainConfig c;
    c.radius = 1;
    c.epochs = 20;
    c.lr_milestones = {10};
    return c;
  }

  double step_size() const { return inner_step_size > 0 ? inner_step_size : radius / 3.0; }

  double lr_at(int epoch) const {
    double v = lr;
    for (int m : lr_milestones)
      if (epoch >= m) v *= 0.1;
    return v;
  }

  void validate() const {
    if (!(radius >= 0) || !std::isfinite(radius)) throw InvalidConfig("radius must be >= 0");
    if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
    if (radius > 0 && inner_steps < 1) throw InvalidConfig("inner_steps must be >= 1");
    if (inner_step_size < 0) throw InvalidConfig("inner_step_size must be >= 0");
    if (!(lr > 0)) throw InvalidConfig("lr must be positive");
    if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
    for (int m : lr_milestones)
      if (m < 1 || m >= epochs) throw InvalidConfig("lr milestone " + std::to_string(m) + " outside (0, epochs)");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["radius"] = radius;
    j["epochs"] = epochs;
    j["inner_steps"] = inner_steps;
    j["inner_step_size"] = step_size();
    j["optimizer"] = {{"kind", "sgd"}, {"momentum", momentum}, {"weight_decay", weight_decay}};
    j["lr"] = {{"initial", lr}, {"milestones", lr_milestones}, {"factor", 0.1}};
    j["batch_size"] = batch_size;
    j["hflip"] = hflip;
    j["dataset_id"] = dataset_id;
    j["head"] = {{"variant", head.variant == HeadVariant::angular_margin ? "angular_margin" : "plain_softmax"},
                 {"margin", head.margin},
                 {"scale", head.scale}};
    j["architecture"] = architecture;
    j["embedding_dim"] = embedding_dim;
    j["seed"] = seed;
    return j;
  }

  std::string digest() const { return digest_hex(to_json().dump()); }
};

struct EpochStats {
  int epoch = 0;
  double loss = 0;
  double accuracy = 0;  // head accuracy on the (possibly perturbed) training batches
  double lr = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

namespace detail {

template <class T>
double head_loss_and_input_gradient(const Embedder<T>& model, const SupervisoryHead<T>& head, const Tensor<T>& x,
                                    std::span<const std::size_t> labels, Tensor<T>* grad, std::vector<double>* per) {
  typename Embedder<T>::Trace tr;
  typename SupervisoryHead<T>::Trace htr;
  const auto emb = model.forward(x, nn::Mode::inference, &tr);
  const auto logits = head.forward(emb, labels, &htr);
  std::vector<T> dl;
  const double loss = softmax_cross_entropy<T>(logits, labels, head.num_classes(), grad ? &dl : nullptr, per);
  if (grad) *grad = model.backward(tr, head.backward(htr, dl));
  return loss;
}

inline Tensor<float> hflip(const Tensor<float>& x) {
  Tensor<float> out(x.batch(), x.channels(), x.height(), x.width());
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t y = 0; y < x.height(); ++y)
        for (std::size_t i = 0; i < x.width(); ++i) out.at(n, c, y, i) = x.at(n, c, y, x.width() - 1 - i);
  return out;
}

}  // namespace detail

/// Projected gradient ascent on the head's classification loss, started from
/// a uniform point in the radius ball. Normalization layers use their running
/// statistics, which stay untouched. Each sample returns its best iterate, so
/// its loss never falls below the random start.
template <class T>
Tensor<T> pgd_inner_max(const Embedder<T>& model, const SupervisoryHead<T>& head, const Tensor<T>& x,
                        std::span<const std::size_t> labels, double radius, int steps, double step_size, Rng& rng) {
  if (!(radius >= 0)) throw InvalidConfig("pgd radius must be >= 0");
  if (radius == 0 || steps < 1) return x;
  const T eps = static_cast<T>(radius / 255.0), alpha = static_cast<T>(step_size / 255.0);
  const std::size_t n = x.batch(), per = x.sample_size();

  Tensor<T> cur = x;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const T d = static_cast<T>((2 * uniform01(rng) - 1) * double(eps));
    cur.data()[i] = std::clamp(x.data()[i] + d, T(0), T(1));
  }
  Tensor<T> best = cur;
  std::vector<double> best_loss(n, -std::numeric_limits<double>::infinity()), loss;
  Tensor<T> grad;
  for (int k = 0; k <= steps; ++k) {
    const bool last = k == steps;
    detail::head_loss_and_input_gradient(model, head, cur, labels, last ? nullptr : &grad, &loss);
    for (std::size_t b = 0; b < n; ++b)
      if (loss[b] > best_loss[b]) {
        best_loss[b] = loss[b];
        std::copy_n(cur.data() + b * per, per, best.data() + b * per);
      }
    if (last) break;
    if (!all_finite<T>(grad.values())) throw NonFiniteGradient("non-finite gradient in inner maximization");
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const T g = grad.data()[i];
      const T s = g > 0 ? T(1) : (g < 0 ? T(-1) : T(0));
      const T xi = x.data()[i];
      cur.data()[i] = std::clamp(std::clamp(cur.data()[i] + alpha * s, xi - eps, xi + eps), T(0), T(1));
    }
  }
  return best;
}

/// Min-max training: the inner problem is pgd_inner_max, the outer one SGD on
/// the perturbed batch. Radius 0 reduces to ordinary training. The head is
/// discarded on return.
inline Embedder<float> adversarial_train(const TrainConfig& cfg, const LabeledDataset& data,
                                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const std::size_t classes = data.num_classes();
  if (classes == 0 || data.size() < 2 * classes)
    throw DatasetTooSmall("need at least 2 images per class, got " + std::to_string(data.size()) + " for " +
                          std::to_string(classes) + " classes");
  for (auto y : data.labels)
    if (y >= classes) throw LabelOutOfRange("label " + std::to_string(y) + " out of range");

  ModelInfo info;
  info.architecture_id = cfg.architecture;
  info.channels = data.images.front().channels();
  info.side = data.images.front().height();
  info.embedding_dim = cfg.embedding_dim;
  info.provenance = cfg.radius > 0 ? Provenance::make_robust(cfg.radius, cfg.epochs) : Provenance::standard(cfg.epochs);
  auto cfg_json = cfg.to_json();
  info.config_digest = cfg.digest();
  info.config_json = cfg_json.dump();

  auto model = make_embedder<float>(info, cfg.seed);
  SupervisoryHead<float> head(cfg.head, classes, cfg.embedding_dim, cfg.seed);

  std::vector<nn::Param<float>*> params = model.params();
  for (auto* p : head.params()) params.push_back(p);
  std::vector<std::vector<float>> velocity;
  for (auto* p : params) velocity.emplace_back(p->value.size(), 0.0f);

  Rng shuffle_rng = derive_rng(cfg.seed, stream_id("train:shuffle"));
  Rng augment_rng = derive_rng(cfg.seed, stream_id("train:augment"));
  Rng pgd_rng = derive_rng(cfg.seed, stream_id("train:pgd"));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = cfg.lr_at(epoch);
    double loss_sum = 0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Image> imgs;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto idx = order[i];
        const bool flip = cfg.hflip && uniform01(augment_rng) < 0.5;
        imgs.push_back(flip ? detail::hflip(data.images[idx]) : data.images[idx]);
        labels.push_back(data.labels[idx]);
      }
      Tensor<float> x = stack<float>(imgs);
      if (cfg.radius > 0) x = pgd_inner_max(model, head, x, labels, cfg.radius, cfg.inner_steps, cfg.step_size(), pgd_rng);

      Embedder<float>::Trace tr;
      SupervisoryHead<float>::Trace htr;
      const auto emb = model.forward(x, nn::Mode::training, &tr);
      const auto logits = head.forward(emb, labels, &htr);
      std::vector<float> dl;
      const double loss = softmax_cross_entropy<float>(logits, labels, classes, &dl);
      if (!std::isfinite(loss)) throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch));
      for (std::size_t b = 0; b < labels.size(); ++b) {
        const float* z = &logits[b * classes];
        if (std::size_t(std::max_element(z, z + classes) - z) == labels[b]) ++correct;
      }
      loss_sum += loss * double(labels.size());
      seen += labels.size();

      Gradients<float> grads = model.zero_gradients();
      Gradients<float> head_grads;
      for (auto* p : head.params()) head_grads.emplace_back(p->value.size(), 0.0f);
      const auto d_emb = head.backward(htr, dl, &head_grads);
      model.backward(tr, d_emb, &grads, false);
      model.commit_statistics(tr);
      for (auto& g : head_grads) grads.push_back(std::move(g));

      for (std::size_t k = 0; k < params.size(); ++k) {
        auto* p = params[k];
        if (!p->trainable) continue;
        auto& v = velocity[k];
        const auto& g = grads[k];
        const float wd = p->decay ? float(cfg.weight_decay) : 0.0f;
        for (std::size_t i = 0; i < v.size(); ++i) {
          v[i] = float(cfg.momentum) * v[i] + (g[i] + wd * p->value[i]);
          p->value[i] -= float(lr) * v[i];
        }
      }
    }
    if (on_epoch) on_epoch({epoch + 1, loss_sum / double(seen), double(correct) / double(seen), lr});
  }
  return model;
}

inline Embedder<float> standard_train(TrainConfig cfg, const LabeledDataset& data, const EpochCallback& on_epoch = {}) {
  if (cfg.radius != 0) throw InvalidConfig("standard_train requires radius 0");
  return adversarial_train(cfg, data, on_epoch);
}

}  // namespace lmfap
