#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lmfap/embedder.hpp"
#include "lmfap/error.hpp"
#include "lmfap/imaging.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

// ---------------------------------------------------------------------------
// Structural similarity

struct SsimConfig {
  double d1 = 0.01;
  double d2 = 0.03;
  int bits = 8;
  std::size_t window = 8;

  double dynamic_range() const { return std::ldexp(1.0, bits) - 1.0; }
  double c1() const { return (d1 * dynamic_range()) * (d1 * dynamic_range()); }
  double c2() const { return (d2 * dynamic_range()) * (d2 * dynamic_range()); }
};

/// Single-window SSIM of two equally long intensity lists (already scaled to
/// the configured dynamic range). Variances are population variances.
inline double ssim_window(std::span<const double> a, std::span<const double> b, const SsimConfig& cfg = {}) {
  if (a.size() != b.size() || a.empty()) throw ShapeMismatch("ssim window: size mismatch");
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double va = 0, vb = 0, cov = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
    cov += (a[i] - ma) * (b[i] - mb);
  }
  va /= n, vb /= n, cov /= n;
  const double c1 = cfg.c1(), c2 = cfg.c2();
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

/// Mean SSIM over every window position (stride 1) and channel. Images are in
/// [0,1] and scaled to the configured bit depth. Windows larger than the
/// image shrink to the image size.
template <class T>
double ssim(const Tensor<T>& x, const Tensor<T>& y, const SsimConfig& cfg = {}) {
  if (!x.same_shape(y)) throw ShapeMismatch("ssim: " + x.shape_string() + " vs " + y.shape_string());
  const std::size_t wh = std::min(cfg.window, x.height()), ww = std::min(cfg.window, x.width());
  const double J = cfg.dynamic_range(), c1 = cfg.c1(), c2 = cfg.c2(), n = double(wh * ww);
  const std::size_t H = x.height(), W = x.width();
  // summed-area tables of a, b, a², b², ab
  std::vector<double> s(5 * (H + 1) * (W + 1));
  auto at = [&](int k, std::size_t r, std::size_t c) -> double& { return s[(k * (H + 1) + r) * (W + 1) + c]; };
  double total = 0;
  std::size_t count = 0;
  for (std::size_t n_ = 0; n_ < x.batch(); ++n_)
    for (std::size_t ch = 0; ch < x.channels(); ++ch) {
      std::fill(s.begin(), s.end(), 0.0);
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
          const double a = double(x.at(n_, ch, r, c)) * J, b = double(y.at(n_, ch, r, c)) * J;
          const double v[5] = {a, b, a * a, b * b, a * b};
          for (int k = 0; k < 5; ++k)
            at(k, r + 1, c + 1) = v[k] + at(k, r, c + 1) + at(k, r + 1, c) - at(k, r, c);
        }
      for (std::size_t r = 0; r + wh <= H; ++r)
        for (std::size_t c = 0; c + ww <= W; ++c) {
          double m[5];
          for (int k = 0; k < 5; ++k)
            m[k] = (at(k, r + wh, c + ww) - at(k, r, c + ww) - at(k, r + wh, c) + at(k, r, c)) / n;
          const double va = std::max(0.0, m[2] - m[0] * m[0]), vb = std::max(0.0, m[3] - m[1] * m[1]);
          const double cov = m[4] - m[0] * m[1];
          total += ((2 * m[0] * m[1] + c1) * (2 * cov + c2)) / ((m[0] * m[0] + m[1] * m[1] + c1) * (va + vb + c2));
          ++count;
        }
    }
  return total / double(count);
}

// ---------------------------------------------------------------------------
// Threshold calibration

struct Calibration {
  VerificationRule rule;
  double accuracy = 0;
};

inline double verification_accuracy(std::span<const double> distances, std::span<const PairLabel> labels, double tau) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < distances.size(); ++i)
    ok += ((distances[i] < tau) == (labels[i] == PairLabel::positive)) ? 1 : 0;
  return distances.empty() ? 0.0 : double(ok) / double(distances.size());
}

/// Accuracy-optimal threshold over {0, midpoints between distinct sorted
/// distances, max + 1}; ties resolve to the smallest threshold.
inline Calibration calibrate_threshold(std::span<const double> distances, std::span<const PairLabel> labels) {
  if (distances.size() != labels.size()) throw PairCountMismatch("one label per distance required");
  const bool pos = std::find(labels.begin(), labels.end(), PairLabel::positive) != labels.end();
  const bool neg = std::find(labels.begin(), labels.end(), PairLabel::negative) != labels.end();
  if (!pos || !neg) throw NeedsBothLabels("threshold calibration needs positive and negative pairs");
  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{0.0};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  candidates.push_back(sorted.back() + 1.0);
  std::sort(candidates.begin(), candidates.end());

  // sweep: accuracy changes only when tau passes a distance
  std::vector<std::size_t> idx(distances.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return distances[a] < distances[b]; });
  std::size_t negatives = 0;
  for (auto l : labels) negatives += l == PairLabel::negative;
  std::size_t correct = negatives, k = 0;  // tau below everything: all "different"
  Calibration best{VerificationRule(candidates.front()), -1};
  for (double tau : candidates) {
    while (k < idx.size() && distances[idx[k]] < tau) {
      correct += labels[idx[k]] == PairLabel::positive ? 1 : std::size_t(-1);
      ++k;
    }
    const double acc = double(correct) / double(distances.size());
    if (acc > best.accuracy) best = {VerificationRule(tau), acc};
  }
  return best;
}

template <class T>
std::vector<double> pair_distances(const Embedder<T>& model, std::span<const Tensor<T>> probes,
                                   std::span<const Tensor<T>> enrolled) {
  if (probes.size() != enrolled.size()) throw PairCountMismatch("probe/enrolled count mismatch");
  std::vector<double> d(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) d[i] = double(pair_distance(model, probes[i], enrolled[i]));
  return d;
}

// ---------------------------------------------------------------------------
// Attack success rate

struct AsrCounts {
  std::size_t total = 0;       // positive pairs
  std::size_t recognized = 0;  // recognized before the attack
  std::size_t recognized_adv = 0;

  double rate() const {
    return total == 0 ? 0.0 : (double(recognized) - double(recognized_adv)) / double(total);
  }
};

inline double attack_success_rate(const AsrCounts& c) { return c.rate(); }

/// Counts over positive pairs only; clean_distances and adv_distances are the
/// same pairs before and after the probe is replaced.
inline AsrCounts count_recognized(const VerificationRule& rule, std::span<const double> clean_distances,
                                  std::span<const double> adv_distances) {
  if (clean_distances.size() != adv_distances.size()) throw PairCountMismatch("clean/adversarial pair counts differ");
  AsrCounts c;
  c.total = clean_distances.size();
  for (std::size_t i = 0; i < c.total; ++i) {
    c.recognized += rule.same(clean_distances[i]);
    c.recognized_adv += rule.same(adv_distances[i]);
  }
  return c;
}

template <class T>
double attack_success_rate(const Embedder<T>& model, const VerificationRule& rule, std::span<const Tensor<T>> probes,
                           std::span<const Tensor<T>> enrolled, std::span<const Tensor<T>> adv_probes) {
  if (adv_probes.size() != probes.size()) throw PairCountMismatch("clean/adversarial pair counts differ");
  return count_recognized(rule, pair_distances(model, probes, enrolled), pair_distances(model, adv_probes, enrolled))
      .rate();
}

}  // namespace lmfap
