#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmfap/dct.hpp"
#include "lmfap/digest.hpp"
#include "lmfap/embedder.hpp"
#include "lmfap/error.hpp"
#include "lmfap/imaging.hpp"
#include "lmfap/jpeg.hpp"
#include "lmfap/random.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

// ---------------------------------------------------------------------------
// Plan

struct Momentum {
  double mu = 1.0;
};

struct DiverseInput {
  double p = 0.5;
  double resize_lo = 0.9;  // smallest resize as a fraction of the side
};

struct TranslationInvariant {
  std::size_t kernel_size = 7;
  double sigma = 3.0;
};

struct ScaleInvariant {
  std::size_t copies = 5;  // scales 1, 1/2, ..., 1/2^(copies-1)
};

struct Admix {
  double eta = 0.2;
  std::size_t copies = 3;
};

struct Transforms {
  std::optional<Momentum> momentum;
  std::optional<DiverseInput> diverse_input;
  std::optional<TranslationInvariant> translation_invariant;
  std::optional<ScaleInvariant> scale_invariant;
  std::optional<Admix> admix;
};

/// Configuration of an iterative l-infinity attack. epsilon and step_size
/// are in [0,1] units; the JSON form uses 0-255 units.
struct AttackPlan {
  std::string name = "i-fgsm";
  double epsilon = 16.0 / 255.0;
  int steps = 10;
  double step_size = 1.25 / 255.0;
  Transforms transforms;
  std::size_t dct_low_cutoff = 0;  // 0: no constraint
  int diffjpeg_quality = 0;        // 0: no gradient wrapper
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon >= 0 && epsilon <= 1)) throw InvalidPlan("epsilon must lie in [0,1]");
    if (steps < 1) throw InvalidPlan("steps must be >= 1");
    if (!(step_size >= 0) || !std::isfinite(step_size)) throw InvalidPlan("step size must be >= 0");
    const auto& t = transforms;
    if (t.momentum && !(t.momentum->mu >= 0)) throw InvalidPlan("momentum must be >= 0");
    if (t.diverse_input) {
      if (!(t.diverse_input->p >= 0 && t.diverse_input->p <= 1)) throw InvalidPlan("diverse-input p outside [0,1]");
      if (!(t.diverse_input->resize_lo > 0 && t.diverse_input->resize_lo <= 1))
        throw InvalidPlan("diverse-input resize_lo outside (0,1]");
    }
    if (t.translation_invariant) {
      if (t.translation_invariant->kernel_size % 2 == 0) throw InvalidPlan("TI kernel size must be odd");
      if (!(t.translation_invariant->sigma > 0)) throw InvalidPlan("TI sigma must be positive");
    }
    if (t.scale_invariant && t.scale_invariant->copies < 1) throw InvalidPlan("SI needs at least one scale");
    if (t.admix && (t.admix->copies < 1 || !(t.admix->eta >= 0))) throw InvalidPlan("admix needs copies >= 1, eta >= 0");
    if (diffjpeg_quality != 0) require_quality(diffjpeg_quality);
  }

  /// Builds a plan from a hyphenated attack name such as "DI-MI", "ADMIX-DI-TI-MI" or "FGSM".
  /// Source tags (LFAP, LMFAP) are accepted and ignored.
  static AttackPlan preset(const std::string& attack_name) {
    AttackPlan p;
    std::string lower;
    for (char c : attack_name) lower.push_back(char(std::tolower(static_cast<unsigned char>(c))));
    p.name = lower;
    std::stringstream ss(lower);
    std::string tok;
    bool single = false, iterative = false;
    while (std::getline(ss, tok, '-')) {
      if (tok == "fgsm") single = true;
      else if (tok == "i" || tok == "ifgsm" || tok == "bim") iterative = true;
      else if (tok == "mi") p.transforms.momentum = Momentum{};
      else if (tok == "di") p.transforms.diverse_input = DiverseInput{};
      else if (tok == "ti") p.transforms.translation_invariant = TranslationInvariant{};
      else if (tok == "si") p.transforms.scale_invariant = ScaleInvariant{};
      else if (tok == "admix") p.transforms.admix = Admix{};
      else if (tok == "lfap" || tok == "lmfap" || tok == "standard") continue;
      else throw InvalidPlan("unknown attack component '" + tok + "' in " + attack_name);
    }
    if (single && !iterative && !p.transforms.momentum) {
      p.steps = 1;
      p.step_size = p.epsilon;
    }
    return p;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["epsilon"] = epsilon * 255.0;
    j["steps"] = steps;
    j["step_size"] = step_size * 255.0;
    j["seed"] = seed;
    auto& t = j["transforms"] = nlohmann::ordered_json::object();
    if (transforms.admix) t["admix"] = {{"eta", transforms.admix->eta}, {"copies", transforms.admix->copies}};
    if (transforms.scale_invariant) t["scale_invariant"] = {{"copies", transforms.scale_invariant->copies}};
    if (transforms.diverse_input)
      t["diverse_input"] = {{"p", transforms.diverse_input->p}, {"resize_lo", transforms.diverse_input->resize_lo}};
    if (transforms.translation_invariant)
      t["translation_invariant"] = {{"kernel_size", transforms.translation_invariant->kernel_size},
                                    {"sigma", transforms.translation_invariant->sigma}};
    if (transforms.momentum) t["momentum"] = {{"mu", transforms.momentum->mu}};
    j["constraint"] = dct_low_cutoff ? nlohmann::ordered_json{{"kind", "dct-low"}, {"cutoff", dct_low_cutoff}}
                                     : nlohmann::ordered_json{{"kind", "none"}};
    j["gradient_wrapper"] = diffjpeg_quality
                                ? nlohmann::ordered_json{{"kind", "differentiable-jpeg"}, {"quality", diffjpeg_quality}}
                                : nlohmann::ordered_json{{"kind", "none"}};
    return j;
  }

  static AttackPlan from_json(const nlohmann::json& j) {
    AttackPlan p;
    try {
      if (j.contains("preset")) p = preset(j.at("preset").get<std::string>());
      p.name = j.value("name", p.name);
      if (j.contains("epsilon")) p.epsilon = j.at("epsilon").get<double>() / 255.0;
      p.steps = j.value("steps", p.steps);
      if (j.contains("step_size")) p.step_size = j.at("step_size").get<double>() / 255.0;
      p.seed = j.value("seed", p.seed);
      if (j.contains("transforms")) {
        const auto& t = j.at("transforms");
        if (t.contains("momentum")) p.transforms.momentum = Momentum{t["momentum"].value("mu", 1.0)};
        if (t.contains("diverse_input"))
          p.transforms.diverse_input =
              DiverseInput{t["diverse_input"].value("p", 0.5), t["diverse_input"].value("resize_lo", 0.9)};
        if (t.contains("translation_invariant"))
          p.transforms.translation_invariant =
              TranslationInvariant{t["translation_invariant"].value("kernel_size", std::size_t(7)),
                                   t["translation_invariant"].value("sigma", 3.0)};
        if (t.contains("scale_invariant"))
          p.transforms.scale_invariant = ScaleInvariant{t["scale_invariant"].value("copies", std::size_t(5))};
        if (t.contains("admix"))
          p.transforms.admix = Admix{t["admix"].value("eta", 0.2), t["admix"].value("copies", std::size_t(3))};
      }
      if (j.contains("constraint")) {
        const auto& c = j.at("constraint");
        const auto kind = c.value("kind", std::string("none"));
        if (kind == "dct-low") p.dct_low_cutoff = c.at("cutoff").get<std::size_t>();
        else if (kind != "none") throw InvalidPlan("unknown constraint kind '" + kind + "'");
      }
      if (j.contains("gradient_wrapper")) {
        const auto& g = j.at("gradient_wrapper");
        const auto kind = g.value("kind", std::string("none"));
        if (kind == "differentiable-jpeg") p.diffjpeg_quality = g.at("quality").get<int>();
        else if (kind != "none") throw InvalidPlan("unknown gradient wrapper '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw InvalidPlan(std::string("malformed plan: ") + e.what());
    }
    p.validate();
    return p;
  }
};

// ---------------------------------------------------------------------------
// Sources and gradients

template <class T>
struct SourceModel {
  const Embedder<T>* model = nullptr;
  double weight = 1.0;
  std::string id;
};

template <class T>
struct LossGradient {
  Tensor<T> grad;  // same shape as the input batch
  double loss = 0;  // summed over the batch
};

namespace detail {

/// d/dx of sum_n ||f(J(x_n)) - target|| with J the optional differentiable JPEG.
template <class T>
LossGradient<T> source_gradient(const Embedder<T>& model, const Tensor<T>& x, std::span<const T> target,
                                const DifferentiableJpeg<T>* wrapper) {
  LossGradient<T> out;
  if (!wrapper) {
    auto dg = distance_gradient<T>(model, x, target);
    out.grad = std::move(dg.grad);
    for (auto l : dg.loss) out.loss += double(l);
    return out;
  }
  std::vector<typename DifferentiableJpeg<T>::Trace> traces(x.batch());
  std::vector<Tensor<T>> compressed;
  for (std::size_t n = 0; n < x.batch(); ++n) compressed.push_back(wrapper->forward(x.slice(n), &traces[n]));
  auto dg = distance_gradient<T>(model, stack<T>(compressed), target);
  out.grad = Tensor<T>(x.batch(), x.channels(), x.height(), x.width());
  for (std::size_t n = 0; n < x.batch(); ++n) {
    const auto g = wrapper->backward(traces[n], dg.grad.slice(n));
    std::copy(g.data(), g.data() + g.size(), out.grad.data() + n * x.sample_size());
    out.loss += double(dg.loss[n]);
  }
  if (!all_finite<T>(out.grad.values())) throw NonFiniteGradient("non-finite gradient through differentiable JPEG");
  return out;
}

template <class T>
std::vector<std::vector<T>> source_targets(std::span<const SourceModel<T>> sources, const Tensor<T>& x_e) {
  std::vector<std::vector<T>> t;
  for (const auto& s : sources) t.push_back(embed(*s.model, x_e));
  return t;
}

}  // namespace detail

/// Weighted sum of per-source loss gradients for a batch of inputs; the first
/// weight is conventionally 1 and later ones are lambda-style multipliers.
/// Sources with weight 0 are skipped.
template <class T>
LossGradient<T> ensemble_gradient(std::span<const SourceModel<T>> sources, const Tensor<T>& x,
                                  std::span<const std::vector<T>> targets, const DifferentiableJpeg<T>* wrapper = nullptr) {
  if (sources.empty()) throw InvalidPlan("at least one source model is required");
  if (targets.size() != sources.size()) throw ShapeMismatch("one target embedding per source required");
  LossGradient<T> out;
  bool first = true;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const double w = sources[k].weight;
    if (w == 0) continue;
    auto g = detail::source_gradient<T>(*sources[k].model, x, targets[k], wrapper);
    if (w != 1) g.grad *= static_cast<T>(w);
    if (first) out.grad = std::move(g.grad);
    else out.grad += g.grad;
    out.loss += w * g.loss;
    first = false;
  }
  if (first) out.grad = Tensor<T>(x.batch(), x.channels(), x.height(), x.width());
  return out;
}

template <class T>
Tensor<T> ensemble_gradient(std::span<const SourceModel<T>> sources, const Tensor<T>& x, const Tensor<T>& x_e) {
  const auto targets = detail::source_targets(sources, x_e);
  return ensemble_gradient<T>(sources, x, targets).grad;
}

/// Gradient of the attack loss seen through a differentiable JPEG of quality q.
template <class T>
Tensor<T> diffjpeg_wrapped_gradient(const Embedder<T>& model, int q, const Tensor<T>& x, const Tensor<T>& x_e) {
  const DifferentiableJpeg<T> wrapper(q);
  const auto target = embed(model, x_e);
  return detail::source_gradient<T>(model, x, target, &wrapper).grad;
}

// ---------------------------------------------------------------------------
// Projection and constraints

/// Clamps x_adv into [x - eps, x + eps] and [0, 1]. Bounds are computed in
/// double and rounded inward so the constraint holds exactly in double.
template <class T>
void project(Tensor<T>& adv, const Tensor<T>& x, double eps) {
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const double xi = double(x.data()[i]);
    T lo = static_cast<T>(xi - eps), hi = static_cast<T>(xi + eps);
    if (double(lo) < xi - eps) lo = std::nextafter(lo, T(1));
    if (double(hi) > xi + eps) hi = std::nextafter(hi, T(0));
    T v = std::clamp(adv.data()[i], lo, hi);
    adv.data()[i] = std::clamp(v, T(0), T(1));
  }
}

/// Splits a projected adversarial image into delta and clip(x + delta) so
/// that both hold exactly in float and delta stays inside the ball.
template <class T>
void finalize(const Tensor<T>& adv, const Tensor<T>& x, double eps, Tensor<T>& delta, Tensor<T>& out) {
  delta = Tensor<T>(x.batch(), x.channels(), x.height(), x.width());
  out = delta;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T xi = x.data()[i];
    T a = adv.data()[i], d, r;
    for (;;) {
      d = a - xi;
      r = std::clamp(static_cast<T>(xi + d), T(0), T(1));
      if (std::abs(double(d)) <= eps && std::abs(double(r) - double(xi)) <= eps) break;
      a = std::nextafter(a, xi);
    }
    delta.data()[i] = d;
    out.data()[i] = r;
  }
}

/// DCT-Low baseline: drop every shell at or above cutoff, then re-project
/// into the epsilon ball.
template <class T>
Tensor<T> dct_low_constrain(const Tensor<T>& delta, std::size_t cutoff, double eps) {
  auto out = low_pass(delta, cutoff);
  const T e = static_cast<T>(eps);
  for (auto& v : out.values()) v = std::clamp(v, -e, e);
  return out;
}

// ---------------------------------------------------------------------------
// Input transforms

namespace detail {

template <class T>
struct DiverseDraw {
  std::size_t size = 0, top = 0, left = 0;
  bool active = false;
};

template <class T>
Tensor<T> diverse_forward(const Tensor<T>& x, const DiverseDraw<T>& d) {
  if (!d.active) return x;
  const auto small = resize_bilinear(x, d.size, d.size);
  Tensor<T> out(x.batch(), x.channels(), x.height(), x.width());
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t y = 0; y < d.size; ++y)
      for (std::size_t i = 0; i < d.size; ++i) out.at(0, c, d.top + y, d.left + i) = small.at(0, c, y, i);
  return out;
}

template <class T>
Tensor<T> diverse_backward(const Tensor<T>& g, const DiverseDraw<T>& d) {
  if (!d.active) return g;
  Tensor<T> crop(1, g.channels(), d.size, d.size);
  for (std::size_t c = 0; c < g.channels(); ++c)
    for (std::size_t y = 0; y < d.size; ++y)
      for (std::size_t i = 0; i < d.size; ++i) crop.at(0, c, y, i) = g.at(0, c, d.top + y, d.left + i);
  return resize_bilinear_adjoint(crop, g.height(), g.width());
}

inline std::vector<double> gaussian_kernel(std::size_t k, double sigma) {
  std::vector<double> w(k * k);
  const double r = double(k / 2);
  double s = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double di = double(i) - r, dj = double(j) - r;
      s += w[i * k + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
    }
  for (auto& v : w) v /= s;
  return w;
}

/// Depthwise correlation with zero padding ("same" output size).
template <class T>
Tensor<T> smooth(const Tensor<T>& g, const std::vector<double>& w, std::size_t k) {
  Tensor<T> out(g.batch(), g.channels(), g.height(), g.width());
  const long r = long(k / 2), H = long(g.height()), W = long(g.width());
  for (std::size_t c = 0; c < g.channels(); ++c)
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        double s = 0;
        for (long i = -r; i <= r; ++i) {
          const long yy = y + i;
          if (yy < 0 || yy >= H) continue;
          for (long j = -r; j <= r; ++j) {
            const long xx = x + j;
            if (xx < 0 || xx >= W) continue;
            s += w[std::size_t((i + r) * long(k) + (j + r))] * double(g.at(0, c, std::size_t(yy), std::size_t(xx)));
          }
        }
        out.at(0, c, std::size_t(y), std::size_t(x)) = static_cast<T>(s);
      }
  return out;
}

template <class T>
T sign(T v) {
  return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Attacks

/// Images mixed into the probe by ADMIX. When subject labels are given,
/// images of the excluded subject are never drawn.
template <class T>
struct MixPool {
  std::span<const Tensor<T>> images;
  std::span<const std::size_t> subjects;
  std::size_t exclude = std::size_t(-1);

  MixPool() = default;
  MixPool(std::span<const Tensor<T>> imgs) : images(imgs) {}
  MixPool(std::span<const Tensor<T>> imgs, std::span<const std::size_t> subj, std::size_t excluded)
      : images(imgs), subjects(subj), exclude(excluded) {
    if (!subjects.empty() && subjects.size() != images.size()) throw ShapeMismatch("one subject per pool image");
  }

  bool has_candidates() const {
    if (subjects.empty()) return !images.empty();
    return std::any_of(subjects.begin(), subjects.end(), [&](auto s) { return s != exclude; });
  }

  const Tensor<T>& draw(Rng& rng) const {
    for (;;) {
      const auto i = uniform_index(rng, images.size());
      if (subjects.empty() || subjects[i] != exclude) return images[i];
    }
  }
};

template <class T>
struct PerturbationResult {
  Tensor<T> delta;
  Tensor<T> adv_image;
  std::string plan_digest;
  std::string attack_id;
  std::vector<double> per_step_loss;
  std::vector<std::string> warnings;
  std::vector<std::string> source_ids;
};

template <class T>
std::string plan_digest(const AttackPlan& plan, std::span<const SourceModel<T>> sources) {
  auto j = plan.to_json();
  auto& s = j["sources"] = nlohmann::ordered_json::array();
  for (const auto& src : sources)
    s.push_back({{"id", src.id}, {"config_digest", src.model ? src.model->info().config_digest : ""}, {"weight", src.weight}});
  return digest_hex(j.dump());
}

/// Per-attack randomness is derived from (plan seed, pair id, transform), so
/// enabling one transform never shifts the draws of another.
inline Rng attack_rng(std::uint64_t seed, std::uint64_t pair_id, const char* transform) {
  return derive_rng(splitmix64(seed) ^ splitmix64(pair_id + 0x51ed27ULL), stream_id(transform));
}

/// Iterative sign-gradient attack. Each step composes the gradient as
/// admix copies -> scale copies -> diverse input -> source ensemble ->
/// translation smoothing -> momentum, then takes a signed step and projects.
template <class T>
PerturbationResult<T> iterative_attack(const AttackPlan& plan, std::span<const SourceModel<T>> sources,
                                       const Tensor<T>& x, const Tensor<T>& x_e,
                                       const MixPool<T>& admix_pool = {}, std::uint64_t pair_id = 0) {
  plan.validate();
  if (sources.empty()) throw InvalidPlan("at least one source model is required");
  if (x.batch() != 1 || !x.same_shape(x_e)) throw ShapeMismatch("attack expects a single probe and enrolled image");
  const auto& tf = plan.transforms;
  const bool use_admix = tf.admix && tf.admix->eta != 0;
  if (use_admix && !admix_pool.has_candidates()) throw EmptyAdmixPool("admix requested without a mixing pool");
  const bool use_di = tf.diverse_input && tf.diverse_input->p > 0;
  const bool use_ti = tf.translation_invariant && tf.translation_invariant->kernel_size > 1;
  const bool use_mi = tf.momentum && tf.momentum->mu != 0;
  const std::size_t n_scales = tf.scale_invariant ? tf.scale_invariant->copies : 1;
  const std::size_t n_mix = use_admix ? tf.admix->copies : 1;

  Rng admix_rng = attack_rng(plan.seed, pair_id, "admix");
  Rng di_rng = attack_rng(plan.seed, pair_id, "diverse-input");
  std::vector<double> ti_kernel;
  if (use_ti) ti_kernel = detail::gaussian_kernel(tf.translation_invariant->kernel_size, tf.translation_invariant->sigma);
  std::unique_ptr<DifferentiableJpeg<T>> wrapper;
  if (plan.diffjpeg_quality) wrapper = std::make_unique<DifferentiableJpeg<T>>(plan.diffjpeg_quality);

  const auto targets = detail::source_targets(sources, x_e);
  const std::size_t H = x.height();
  const std::size_t di_lo = use_di ? std::size_t(std::lround(tf.diverse_input->resize_lo * double(H))) : H;

  PerturbationResult<T> res;
  res.attack_id = plan.name;
  res.plan_digest = plan_digest(plan, sources);
  for (const auto& s : sources) res.source_ids.push_back(s.id);

  Tensor<T> adv = x;
  Tensor<T> velocity;
  for (int t = 0; t < plan.steps; ++t) {
    // gradient copies
    std::vector<Tensor<T>> copies;
    std::vector<T> scale_of;
    std::vector<detail::DiverseDraw<T>> draws;
    for (std::size_t a = 0; a < n_mix; ++a) {
      Tensor<T> mixed = adv;
      if (use_admix) {
        const auto& other = admix_pool.draw(admix_rng);
        if (!other.same_shape(x)) throw ShapeMismatch("admix pool image shape mismatch");
        const T eta = static_cast<T>(tf.admix->eta);
        for (std::size_t i = 0; i < mixed.size(); ++i) mixed.data()[i] += eta * other.data()[i];
      }
      for (std::size_t s = 0; s < n_scales; ++s) {
        const T scale = static_cast<T>(std::ldexp(1.0, -int(s)));
        Tensor<T> scaled = mixed;
        if (s) scaled *= scale;
        detail::DiverseDraw<T> d;
        if (use_di && uniform01(di_rng) < tf.diverse_input->p) {
          d.active = true;
          d.size = di_lo + uniform_index(di_rng, H - di_lo + 1);
          d.top = uniform_index(di_rng, H - d.size + 1);
          d.left = uniform_index(di_rng, H - d.size + 1);
        }
        copies.push_back(detail::diverse_forward(scaled, d));
        scale_of.push_back(scale);
        draws.push_back(d);
      }
    }
    const auto eg = ensemble_gradient<T>(sources, stack<T>(copies), targets, wrapper.get());
    Tensor<T> g;
    for (std::size_t k = 0; k < copies.size(); ++k) {
      auto gk = detail::diverse_backward(eg.grad.slice(k), draws[k]);
      if (scale_of[k] != T(1)) gk *= scale_of[k];
      if (k == 0) g = std::move(gk);
      else g += gk;
    }
    if (copies.size() > 1) g *= static_cast<T>(1.0 / double(copies.size()));
    res.per_step_loss.push_back(eg.loss / double(copies.size()));

    if (use_ti) g = detail::smooth(g, ti_kernel, tf.translation_invariant->kernel_size);
    if (use_mi) {
      double l1 = 0;
      for (auto v : g.values()) l1 += std::abs(double(v));
      if (l1 > 0) g *= static_cast<T>(1.0 / l1);
      if (t == 0) velocity = g;
      else {
        velocity *= static_cast<T>(tf.momentum->mu);
        velocity += g;
      }
      g = velocity;
    }

    const T alpha = static_cast<T>(plan.step_size);
    for (std::size_t i = 0; i < adv.size(); ++i) adv.data()[i] += alpha * detail::sign(g.data()[i]);
    project(adv, x, plan.epsilon);
    if (plan.dct_low_cutoff) {
      auto delta = adv - x;
      delta = dct_low_constrain(delta, plan.dct_low_cutoff, plan.epsilon);
      adv = x + delta;
      project(adv, x, plan.epsilon);
    }
  }
  finalize(adv, x, plan.epsilon, res.delta, res.adv_image);
  return res;
}

/// Single signed step of size epsilon.
template <class T>
PerturbationResult<T> fgsm(AttackPlan plan, std::span<const SourceModel<T>> sources, const Tensor<T>& x,
                           const Tensor<T>& x_e, const MixPool<T>& admix_pool = {}, std::uint64_t pair_id = 0) {
  if (plan.steps != 1) throw InvalidPlan("fgsm requires steps = 1");
  plan.step_size = plan.epsilon;
  plan.transforms.momentum.reset();
  return iterative_attack<T>(plan, sources, x, x_e, admix_pool, pair_id);
}

/// Attack driven by a robust source model alone.
template <class T>
PerturbationResult<T> lfap(const AttackPlan& plan, const Embedder<T>& f1, const Tensor<T>& x, const Tensor<T>& x_e,
                           const MixPool<T>& admix_pool = {}, std::uint64_t pair_id = 0) {
  const SourceModel<T> src[1] = {{&f1, 1.0, f1.info().config_digest}};
  auto r = iterative_attack<T>(plan, src, x, x_e, admix_pool, pair_id);
  if (!f1.info().provenance.robust()) r.warnings.push_back("NotRobustSource: f1 provenance is standard");
  return r;
}

/// Weighted ensemble of a strongly robust f1 and a lightly robust f2.
template <class T>
PerturbationResult<T> lmfap(const AttackPlan& plan, const Embedder<T>& f1, const Embedder<T>& f2, double lambda,
                            const Tensor<T>& x, const Tensor<T>& x_e, const MixPool<T>& admix_pool = {},
                            std::uint64_t pair_id = 0) {
  if (!(lambda >= 0)) throw InvalidPlan("lambda must be >= 0");
  if (lambda == 0) return lfap<T>(plan, f1, x, x_e, admix_pool, pair_id);
  const SourceModel<T> src[2] = {{&f1, 1.0, f1.info().config_digest}, {&f2, lambda, f2.info().config_digest}};
  auto r = iterative_attack<T>(plan, src, x, x_e, admix_pool, pair_id);
  if (!f1.info().provenance.robust()) r.warnings.push_back("NotRobustSource: f1 provenance is standard");
  if (!f2.info().provenance.robust()) r.warnings.push_back("NotRobustSource: f2 provenance is standard");
  return r;
}

}  // namespace lmfap
