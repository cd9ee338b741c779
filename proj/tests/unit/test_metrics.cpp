#include <gtest/gtest.h>

#include "lmfap/metrics.hpp"
#include "oracles.hpp"

using namespace lmfap;

namespace {

// Direct per-window evaluation, no summed-area tables.
double brute_ssim(const Image& x, const Image& y, const SsimConfig& cfg) {
  const std::size_t wh = std::min(cfg.window, x.height()), ww = std::min(cfg.window, x.width());
  double total = 0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t r = 0; r + wh <= x.height(); ++r)
      for (std::size_t q = 0; q + ww <= x.width(); ++q) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < wh; ++i)
          for (std::size_t j = 0; j < ww; ++j) {
            a.push_back(255.0 * x.at(c, r + i, q + j));
            b.push_back(255.0 * y.at(c, r + i, q + j));
          }
        total += ssim_window(a, b, cfg);
        ++count;
      }
  return total / double(count);
}

std::vector<PairLabel> labels_of(std::initializer_list<int> v) {
  std::vector<PairLabel> out;
  for (int b : v) out.push_back(b ? PairLabel::positive : PairLabel::negative);
  return out;
}

}  // namespace

TEST(Ssim, Constants) {
  const SsimConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.dynamic_range(), 255.0);
  EXPECT_DOUBLE_EQ(cfg.c1(), 2.55 * 2.55);
  EXPECT_NEAR(cfg.c2(), 7.65 * 7.65, 1e-12);
}

TEST(Ssim, IdentityAndSymmetry) {
  Rng rng(1);
  const auto x = oracle::random_image<float>(rng, 3, 20, 20);
  const auto y = oracle::random_image<float>(rng, 3, 20, 20);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
  EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-12);
  EXPECT_LT(ssim(x, y), 0.5);
}

TEST(Ssim, HandComputedTwoByTwo) {
  // a = {0,0,255,255}, b = {0,255,0,255}: means 127.5, variances 127.5^2, covariance 0
  const std::vector<double> a = {0, 0, 255, 255}, b = {0, 255, 0, 255};
  const double c1 = 2.55 * 2.55, c2 = 7.65 * 7.65, m = 127.5, v = m * m;
  const double want = ((2 * m * m + c1) * c2) / ((2 * m * m + c1) * (2 * v + c2));
  EXPECT_NEAR(ssim_window(a, b), want, 1e-12);
  Image x(1, 1, 2, 2), y(1, 1, 2, 2);
  for (int i = 0; i < 4; ++i) x.data()[i] = float(a[i] / 255), y.data()[i] = float(b[i] / 255);
  EXPECT_NEAR(ssim(x, y), want, 1e-9);
}

TEST(Ssim, SummedAreaMatchesBruteForce) {
  Rng rng(2);
  for (std::size_t side : {5u, 8u, 13u}) {
    const auto x = oracle::random_image<float>(rng, 3, side, side);
    auto y = x;
    for (auto& v : y.values()) v = std::clamp(v + float(0.1 * (uniform01(rng) - 0.5)), 0.0f, 1.0f);
    EXPECT_NEAR(ssim(x, y), brute_ssim(x, y, {}), 1e-9) << side;
  }
}

TEST(Ssim, ShapeMismatchThrows) {
  EXPECT_THROW(ssim(Image(1, 3, 4, 4), Image(1, 3, 5, 5)), ShapeMismatch);
}

TEST(Calibration, SeparableDistances) {
  const std::vector<double> d = {0.1, 0.2, 0.3, 0.9, 1.0, 1.1};
  const auto cal = calibrate_threshold(d, labels_of({1, 1, 1, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(cal.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(cal.rule.threshold, 0.6);
}

TEST(Calibration, IdenticalDistancesTieToSmallest) {
  const std::vector<double> d = {0.5, 0.5, 0.5, 0.5};
  const auto cal = calibrate_threshold(d, labels_of({1, 0, 1, 0}));
  EXPECT_DOUBLE_EQ(cal.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(cal.rule.threshold, 0.0);
}

TEST(Calibration, MatchesExhaustiveCandidateScan) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d;
    std::vector<PairLabel> l;
    const std::size_t n = 4 + uniform_index(rng, 30);
    for (std::size_t i = 0; i < n; ++i) {
      const bool pos = i % 2 == 0;
      d.push_back(std::round((pos ? 0.0 : 0.4) + uniform01(rng) * 10) / 10.0);
      l.push_back(pos ? PairLabel::positive : PairLabel::negative);
    }
    auto sorted = d;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<double> cand{0.0};
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) cand.push_back((sorted[i] + sorted[i + 1]) / 2);
    cand.push_back(sorted.back() + 1);
    double best_acc = -1, best_tau = 0;
    for (double t : cand) {
      std::size_t ok = 0;
      for (std::size_t i = 0; i < n; ++i) ok += (d[i] < t) == (l[i] == PairLabel::positive);
      const double acc = double(ok) / double(n);
      if (acc > best_acc || (acc == best_acc && t < best_tau)) best_acc = acc, best_tau = t;
    }
    const auto cal = calibrate_threshold(d, l);
    EXPECT_DOUBLE_EQ(cal.accuracy, best_acc);
    EXPECT_DOUBLE_EQ(cal.rule.threshold, best_tau);
    EXPECT_DOUBLE_EQ(verification_accuracy(d, l, cal.rule.threshold), best_acc);
  }
}

TEST(Calibration, NoGridThresholdDoesBetter) {
  Rng rng(6);
  std::vector<double> d;
  std::vector<PairLabel> l;
  for (int i = 0; i < 60; ++i) {
    const bool pos = uniform01(rng) < 0.5;
    d.push_back((pos ? 0.3 : 0.6) + 0.4 * uniform01(rng));
    l.push_back(pos ? PairLabel::positive : PairLabel::negative);
  }
  const auto cal = calibrate_threshold(d, l);
  for (double t = 0; t <= 2.0; t += 1e-4) EXPECT_LE(verification_accuracy(d, l, t), cal.accuracy);
}

TEST(Calibration, Errors) {
  const std::vector<double> d = {0.1, 0.2};
  EXPECT_THROW(calibrate_threshold(d, labels_of({1, 1})), NeedsBothLabels);
  EXPECT_THROW(calibrate_threshold(d, labels_of({1})), PairCountMismatch);
}

TEST(Asr, WorkedExamples) {
  EXPECT_DOUBLE_EQ(attack_success_rate(AsrCounts{100, 95, 20}), 0.75);
  EXPECT_DOUBLE_EQ(attack_success_rate(AsrCounts{100, 90, 30}), 0.6);
  EXPECT_DOUBLE_EQ(attack_success_rate(AsrCounts{40, 31, 31}), 0.0);
  EXPECT_DOUBLE_EQ(attack_success_rate(AsrCounts{40, 31, 0}), 31.0 / 40.0);
  EXPECT_DOUBLE_EQ(attack_success_rate(AsrCounts{10, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(attack_success_rate(AsrCounts{10, 5, 7}), -0.2);
  EXPECT_DOUBLE_EQ(attack_success_rate(AsrCounts{}), 0.0);
  const VerificationRule rule(1.0);
  const std::vector<double> clean = {0.5, 0.5, 1.5, 0.2}, adv = {1.5, 0.7, 0.1, 1.0};
  const auto c = count_recognized(rule, clean, adv);
  EXPECT_EQ(c.total, 4u);
  EXPECT_EQ(c.recognized, 3u);
  EXPECT_EQ(c.recognized_adv, 2u);
  EXPECT_DOUBLE_EQ(c.rate(), 0.25);
  const std::vector<double> short_adv = {1.0};
  EXPECT_THROW(count_recognized(rule, clean, short_adv), PairCountMismatch);
}

TEST(Asr, BoundedByCleanRecognitionRate) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 40);
    std::vector<double> clean(n), adv(n);
    for (std::size_t i = 0; i < n; ++i) clean[i] = uniform01(rng) * 2, adv[i] = uniform01(rng) * 2;
    const VerificationRule rule(1.0);
    const auto c = count_recognized(rule, clean, adv);
    EXPECT_LE(c.rate(), double(c.recognized) / double(n));
    EXPECT_GE(c.rate(), -1.0);
    // an attack that only ever increases distances cannot have negative success
    for (std::size_t i = 0; i < n; ++i) adv[i] = clean[i] + uniform01(rng);
    EXPECT_GE(count_recognized(rule, clean, adv).rate(), 0.0);
  }
}

TEST(Asr, ModelLevelMatchesCounts) {
  auto m = oracle::tiny_embedder<float>();
  Rng rng(5);
  std::vector<Image> p, e, a;
  for (int i = 0; i < 6; ++i) {
    p.push_back(oracle::random_image<float>(rng, 3, 16, 16));
    e.push_back(oracle::random_image<float>(rng, 3, 16, 16));
    a.push_back(oracle::random_image<float>(rng, 3, 16, 16));
  }
  const auto dc = pair_distances<float>(m, p, e), da = pair_distances<float>(m, a, e);
  std::vector<double> both = dc;
  both.insert(both.end(), da.begin(), da.end());
  std::sort(both.begin(), both.end());
  const VerificationRule rule(both[both.size() / 2]);
  EXPECT_DOUBLE_EQ(attack_success_rate<float>(m, rule, p, e, a), count_recognized(rule, dc, da).rate());
}
