#include <gtest/gtest.h>

#include <sstream>

#include "lmfap/eval.hpp"
#include "oracles.hpp"

using namespace lmfap;

namespace {

struct World {
  Embedder<float> standard = oracle::tiny_embedder<float>("conv2-w4", 16, 8, 1);
  Embedder<float> f1 = oracle::tiny_embedder<float>("conv2-w4", 16, 8, 2);
  Embedder<float> f2 = oracle::tiny_embedder<float>("conv2-w4", 16, 8, 3);
  Embedder<float> victim = oracle::tiny_embedder<float>("mlp-h6", 16, 8, 4);
  PairSet pairs;
  Target target;

  World() {
    Rng rng(10);
    for (std::size_t s = 0; s < 6; ++s) {
      const auto base = oracle::smooth_image<float>(rng, 3, 16);
      auto near = base;
      for (auto& v : near.values()) v = std::clamp(v + float(0.02 * (uniform01(rng) - 0.5)), 0.0f, 1.0f);
      pairs.add(base, near, s, PairLabel::positive, "p" + std::to_string(s));
      pairs.add(base, oracle::smooth_image<float>(rng, 3, 16), s, PairLabel::negative);
    }
    target = make_target(victim, "victim", pairs);
  }
  PairSet positives() const { return pairs.only(PairLabel::positive); }
  AttackPlan plan(const char* name = "i-fgsm") const {
    auto p = AttackPlan::preset(name);
    p.steps = 3;
    return p;
  }
  AdvSet attack(const Embedder<float>& m, const std::string& id, const AttackPlan& p) const {
    return run_attack(id, {id}, p.seed, positives(), [&](const Image& x, const Image& xe, const MixPool<float>& pool,
                                                           std::size_t i) {
      const SourceModel<float> src[1] = {{&m, 1.0, id}};
      return iterative_attack<float>(p, src, x, xe, pool, i);
    });
  }
};

}  // namespace

TEST(Quality, Parsing) {
  EXPECT_EQ(parse_quality("none"), std::nullopt);
  EXPECT_EQ(parse_quality("75"), 75);
  EXPECT_THROW(parse_quality("0"), QualityOutOfRange);
  EXPECT_THROW(parse_quality("101"), QualityOutOfRange);
  EXPECT_THROW(parse_quality("75x"), QualityOutOfRange);
  EXPECT_THROW(parse_quality("high"), QualityOutOfRange);
  const auto qs = parse_qualities("none,75,50");
  ASSERT_EQ(qs.size(), 3u);
  EXPECT_FALSE(qs[0]);
  EXPECT_EQ(qs[2], 50);
  EXPECT_EQ(quality_name(qs[1]), "75");
  EXPECT_EQ(quality_name(std::nullopt), "none");
}

TEST(Grid, Parsing) {
  const auto g = parse_grid("0:1:0.1");
  ASSERT_EQ(g.size(), 11u);
  EXPECT_DOUBLE_EQ(g[3], 0.3);
  EXPECT_DOUBLE_EQ(g.back(), 1.0);
  EXPECT_EQ(parse_grid("0.5:0.5:1").size(), 1u);
  EXPECT_THROW(parse_grid("0:1"), InvalidConfig);
  EXPECT_THROW(parse_grid("0:1:0"), InvalidConfig);
  EXPECT_THROW(parse_grid("1:0:0.1"), InvalidConfig);
}

TEST(PairSetTest, OnlyAndPools) {
  World w;
  EXPECT_EQ(w.pairs.size(), 12u);
  const auto pos = w.positives();
  EXPECT_EQ(pos.size(), 6u);
  EXPECT_EQ(pos.probe_names[2], "p2");
  const auto pool = pos.pool_for(2);
  EXPECT_TRUE(pool.has_candidates());
  Rng rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_NE(&pool.draw(rng), &pos.enrolled[2]);
}

TEST(Evaluate, CleanProbesGiveZeroSuccess) {
  World w;
  const auto pos = w.positives();
  AdvSet clean{"none", {}, 0, pos.probes, std::vector<Image>(pos.size(), Image(1, 3, 16, 16))};
  const auto row = evaluate_row(clean, pos, w.target, std::nullopt);
  EXPECT_EQ(row.asr, 0.0);
  EXPECT_NEAR(row.ssim_mean, 1.0, 1e-12);
  EXPECT_EQ(row.n_recognized, row.n_recognized_adv);
  EXPECT_FALSE(row.jpeg_quality);
  AdvSet short_set = clean;
  short_set.adv.pop_back();
  EXPECT_THROW(evaluate_row(short_set, pos, w.target, std::nullopt), PairCountMismatch);
}

TEST(Evaluate, SweepRowsFollowQualityOrder) {
  World w;
  const auto adv = w.attack(w.standard, "standard", w.plan());
  const auto rep = jpeg_sweep(adv, w.positives(), w.target, parse_qualities("none,75,50"));
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_FALSE(rep.rows[0].jpeg_quality);
  EXPECT_EQ(rep.rows[2].jpeg_quality, 50);
  // SSIM is a property of the uncompressed adversarial image
  EXPECT_DOUBLE_EQ(rep.rows[0].ssim_mean, rep.rows[2].ssim_mean);
}

TEST(TransferMatrix, ShapeAndWhiteBoxExclusion) {
  World w;
  const auto pos = w.positives();
  const auto qs = parse_qualities("none,50");
  const auto a = w.attack(w.standard, "standard", w.plan());
  const auto b = w.attack(w.victim, "victim", w.plan());
  const Target t2 = make_target(w.f1, "other", w.pairs);
  const auto rep = transfer_matrix({a, b}, pos, {w.target, t2}, qs);
  EXPECT_EQ(rep.rows.size(), 2u * 2u * 2u - 2u);
  EXPECT_EQ(rep.find("victim", "victim", std::nullopt), nullptr);
  EXPECT_NE(rep.find("standard", "victim", 50), nullptr);
  EXPECT_EQ(transfer_matrix({a, b}, pos, {w.target, t2}, qs, true).rows.size(), 8u);
  EXPECT_THROW(transfer_matrix({a}, pos, {}, qs), NoTargets);
}

TEST(Report, JsonSchemaCsvAndDeterminism) {
  World w;
  auto make = [&] {
    auto rep = jpeg_sweep(w.attack(w.standard, "standard", w.plan("di-mi")), w.positives(), w.target,
                          parse_qualities("none,75"));
    rep.provenance["victim"] = "abc";
    return rep;
  };
  const auto a = make(), b = make();
  const auto j = a.to_json();
  EXPECT_EQ(j["schema"], kReportSchema);
  EXPECT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][1]["jpeg_quality"], "75");
  EXPECT_EQ(j["provenance"]["victim"], "abc");
  for (const char* key : {"attack_id", "source_ids", "target_id", "seed", "asr", "ssim_mean", "n_pairs"})
    EXPECT_TRUE(j["rows"][0].contains(key)) << key;
  EXPECT_EQ(j.dump(), b.to_json().dump());
  std::ostringstream csv;
  a.write_csv(csv);
  std::istringstream lines(csv.str());
  std::string header, row;
  std::getline(lines, header);
  EXPECT_EQ(header, "attack_id,source_ids,target_id,jpeg_quality,seed,asr_percent,ssim_mean,n_pairs");
  std::getline(lines, row);
  EXPECT_EQ(row.rfind("standard,standard,victim,none,", 0), 0u);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 7);
}

TEST(Ablation, LambdaZeroMatchesLfapAndFrequencyRows) {
  World w;
  w.f1.info().provenance = Provenance::make_robust(4, 50);
  w.f2.info().provenance = Provenance::make_robust(1, 20);
  const auto pos = w.positives();
  const auto plan = w.plan();
  const auto curve = lambda_ablation(w.f1, w.f2, {0.0, 0.5}, plan, pos, w.target, std::nullopt);
  ASSERT_EQ(curve.size(), 2u);
  const auto lfap_set = run_attack("lfap", {}, plan.seed, pos,
                                   [&](const Image& x, const Image& xe, const MixPool<float>& pool, std::size_t i) {
                                     return lfap<float>(plan, w.f1, x, xe, pool, i);
                                   });
  EXPECT_DOUBLE_EQ(curve[0].asr, evaluate_row(lfap_set, pos, w.target, std::nullopt).asr);
  EXPECT_THROW(lambda_ablation(w.f1, w.f2, {1.5}, plan, pos, w.target, std::nullopt), InvalidConfig);

  const auto freq = frequency_ablation(w.standard, w.f1, w.f2, 0.6, plan, pos, w.target, 50);
  ASSERT_EQ(freq.rows.size(), 4u);
  EXPECT_EQ(freq.rows[0].attack_id, "standard");
  EXPECT_EQ(freq.rows[1].attack_id, "mid");
  EXPECT_EQ(freq.rows[2].attack_id, "low");
  EXPECT_EQ(freq.rows[3].attack_id, "low-mid");
  EXPECT_DOUBLE_EQ(freq.rows[2].asr, evaluate_row(lfap_set, pos, w.target, 50).asr);
}

TEST(Stability, SummaryStatistics) {
  const auto s = summarize_runs({0.5, 0.6, 0.7});
  EXPECT_NEAR(s.mean, 60.0, 1e-12);
  EXPECT_NEAR(s.variance, 100.0, 1e-9);
  EXPECT_EQ(summarize_runs({0.4}).variance, 0.0);
}

TEST(Stability, DeterministicAttackHasZeroVariance) {
  World w;
  const SourceModel<float> src[1] = {{&w.standard, 1.0, "standard"}};
  const auto s = stability_report(AttackPlan::preset("fgsm"), src, 3, w.positives(), w.target, std::nullopt);
  ASSERT_EQ(s.asr.size(), 3u);
  EXPECT_EQ(s.variance, 0.0);
  const auto d = stability_report(w.plan("di-mi"), src, 2, w.positives(), w.target, 75);
  EXPECT_EQ(d.asr.size(), 2u);
}
