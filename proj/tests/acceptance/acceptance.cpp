// Acceptance gate: one PASS/FAIL line per criterion. Trained models are cached
// in --workdir under their config digest, so reruns skip training.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "lmfap/attack.hpp"
#include "lmfap/checkpoint.hpp"
#include "lmfap/eval.hpp"
#include "lmfap/freq_lab.hpp"
#include "lmfap/synthetic.hpp"
#include "lmfap/train.hpp"
#include "oracles.hpp"

using namespace lmfap;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Gate {
  std::vector<int> ids;
  std::size_t passed = 0, failed = 0;
  std::vector<int> only;
  std::ofstream log;

  void run(int id, const char* name, const std::function<Verdict()>& body) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) return;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    (v.pass ? passed : failed)++;
    const auto line = fmt("C%02d %-4s %-26s ", id, v.pass ? "PASS" : "FAIL", name) + v.detail + fmt("  [%.1fs]", since(t0));
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    log << line << std::endl;
  }
};

// ---------------------------------------------------------------------------
// Property criteria on tiny models

const char* kFuzzAttacks[] = {"fgsm",     "i-fgsm",   "mi",          "di-mi",
                              "ti-di-mi", "si-mi",    "admix-di-mi", "admix-si-ti-di-mi"};

Verdict constraint_suite() {
  const auto t0 = Clock::now();
  auto f1 = oracle::tiny_embedder<float>("conv2-w4", 16, 8, 1);
  auto f2 = oracle::tiny_embedder<float>("conv2-w4", 16, 8, 2);
  auto other = oracle::tiny_embedder<float>("mlp-h6", 16, 8, 3);
  f1.info().provenance = Provenance::make_robust(4, 50);
  f2.info().provenance = Provenance::make_robust(1, 20);
  Rng rng(20240601);
  std::vector<Image> pool;
  for (int i = 0; i < 8; ++i) pool.push_back(oracle::random_image<float>(rng, 3, 16, 16));
  double worst = 0;
  std::size_t violations = 0;
  for (int k = 0; k < 1000; ++k) {
    auto plan = AttackPlan::preset(kFuzzAttacks[uniform_index(rng, std::size(kFuzzAttacks))]);
    plan.epsilon = std::ldexp(uniform01(rng), -1 - int(uniform_index(rng, 5)));
    if (plan.steps > 1 || plan.transforms.momentum) {
      plan.steps = 1 + int(uniform_index(rng, 10));
      plan.step_size = plan.epsilon * 2.0 * uniform01(rng);
    }
    if (uniform01(rng) < 0.2) plan.dct_low_cutoff = 1 + uniform_index(rng, 16);
    if (uniform01(rng) < 0.1) plan.diffjpeg_quality = 1 + int(uniform_index(rng, 100));
    plan.seed = rng();
    // images hugging the range limits exercise the clip
    const double lo = uniform01(rng) < 0.3 ? 0.0 : 0.2, hi = uniform01(rng) < 0.3 ? 1.0 : 0.8;
    const auto x = oracle::random_image<float>(rng, 3, 16, 16, lo, hi);
    const auto xe = oracle::random_image<float>(rng, 3, 16, 16);
    const MixPool<float> mix(pool);
    PerturbationResult<float> r;
    switch (k % 4) {
      case 0: r = lfap<float>(plan, f1, x, xe, mix, k); break;
      case 1: r = lmfap::lmfap<float>(plan, f1, f2, uniform01(rng), x, xe, mix, k); break;
      case 2: {
        const SourceModel<float> src[2] = {{&other, 1.0, "a"}, {&f2, 0.5, "b"}};
        r = plan.steps == 1 && !plan.transforms.momentum ? fgsm<float>(plan, src, x, xe, mix, k)
                                                          : iterative_attack<float>(plan, src, x, xe, mix, k);
        break;
      }
      default: {
        const SourceModel<float> src[1] = {{&other, 1.0, "a"}};
        r = iterative_attack<float>(plan, src, x, xe, mix, k);
      }
    }
    bool bad = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = std::abs(double(r.adv_image[i]) - double(x[i]));
      worst = std::max(worst, d - plan.epsilon);
      bad |= d > plan.epsilon + 1e-9 || r.adv_image[i] < 0.0f || r.adv_image[i] > 1.0f;
    }
    violations += bad;
  }
  const double t = since(t0);
  return {violations == 0 && t < 300,
          fmt("1000 cases, %zu violations, max excess %.2e, %.1fs (limit 300s)", violations, worst, t)};
}

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  auto a = oracle::tiny_embedder<double>("conv2-w4", 16, 8, 5);
  auto b = oracle::tiny_embedder<double>("mlp-h6", 16, 8, 6);
  Rng rng(77);
  const auto x = oracle::smooth_image<double>(rng, 3, 16);
  const auto xe = oracle::smooth_image<double>(rng, 3, 16);
  auto score = [&](const Tensor<double>& g, const std::function<double(const Tensor<double>&)>& loss, double rel) {
    Rng pick(1234);
    int ok = 0;
    for (int k = 0; k < 200; ++k) {
      const auto i = uniform_index(pick, x.size());
      ok += oracle::rel_close(g[i], oracle::central_difference<double>(loss, x, i, 1e-6), rel, 1e-8);
    }
    return ok;
  };
  const auto ta = embed(a, xe), tb = embed(b, xe);
  const int in = score(input_gradient(a, x, xe),
                       [&](const Tensor<double>& v) { return euclidean<double>(embed(a, v), ta); }, 1e-3);
  const double lambda = 0.6;
  const std::vector<SourceModel<double>> src = {{&a, 1.0, "a"}, {&b, lambda, "b"}};
  const int ens = score(ensemble_gradient<double>(src, x, xe), [&](const Tensor<double>& v) {
    return euclidean<double>(embed(a, v), ta) + lambda * euclidean<double>(embed(b, v), tb);
  }, 1e-3);
  const DifferentiableJpeg<double> codec(75);
  const int dj = score(diffjpeg_wrapped_gradient<double>(a, 75, x, xe), [&](const Tensor<double>& v) {
    return euclidean<double>(embed(a, codec.forward(v)), ta);
  }, 1e-2);
  const double t = since(t0);
  return {in >= 190 && ens >= 190 && dj >= 190 && t < 120,
          fmt("input %d/200, ensemble %d/200, diffjpeg %d/200 (need 190), %.1fs", in, ens, dj, t)};
}

Verdict transform_identities() {
  Rng rng(3);
  const auto img = oracle::random_image<double>(rng, 3, 112, 112);
  const auto spec = dct2(img);
  const double round_trip = max_abs_diff(idct2(spec), img);
  double e_pix = 0, e_coef = 0;
  for (double v : img.values()) e_pix += v * v;
  for (double v : spec.coefficients.values()) e_coef += v * v;
  const double parseval = std::abs(e_pix - e_coef) / e_pix;
  const auto bands = band_spectrum(img);
  const double partition = std::abs(bands.total() - e_coef) / e_coef;
  bool masks = true;
  for (std::size_t n = 1; n <= 112; ++n) masks &= removal_mask(112, n).zeros() == 2 * 112 - 1;
  return {round_trip < 1e-6 && parseval < 1e-6 && partition < 1e-6 && masks,
          fmt("round trip %.1e, Parseval %.1e, partition %.1e, mask zeros %s", round_trip, parseval, partition,
              masks ? "2H-1 for every n" : "WRONG")};
}

Verdict codec_suite() {
  const auto t0 = Clock::now();
  bool tables = true;
  for (int q : {50, 75, 90}) {
    const auto ours = quant_tables_for_quality(q);
    const auto ref = oracle::libjpeg_tables(q);
    tables &= std::vector<int>(ours.luma.begin(), ours.luma.end()) == ref.luma &&
              std::vector<int>(ours.chroma.begin(), ours.chroma.end()) == ref.chroma;
  }
  synthetic::Config sc;
  sc.subjects = 10;
  sc.images_per_subject = 5;
  sc.first_image = 900;
  const auto corpus = synthetic::make_dataset(sc).images;
  const int qs[] = {10, 25, 50, 75, 90, 95, 100};
  std::vector<double> err;
  for (int q : qs) {
    double e = 0;
    for (const auto& im : corpus) e += mean_abs_diff(jpeg_roundtrip(im, q), im);
    err.push_back(e / double(corpus.size()));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < err.size(); ++i) monotone &= err[i] <= err[i - 1];
  const DifferentiableJpeg<float> soft(75);
  double diff = 0;
  for (const auto& im : corpus) diff += mean_abs_diff(soft.forward(im), jpeg_roundtrip(im, 75));
  diff /= double(corpus.size());
  const double t = since(t0);
  return {tables && monotone && diff <= 0.02 && t < 300,
          fmt("tables %s, error q10..q100 %.4f -> %.4f %s, soft-vs-hard %.4f (limit 0.02)", tables ? "match" : "DIFFER",
              err.front(), err.back(), monotone ? "monotone" : "NOT monotone", diff)};
}

Verdict reduction_lattice() {
  auto f1 = oracle::tiny_embedder<float>("conv2-w4", 16, 8, 1);
  auto f2 = oracle::tiny_embedder<float>("conv2-w4", 16, 8, 2);
  f1.info().provenance = Provenance::make_robust(4, 50);
  Rng rng(5);
  const auto x = oracle::random_image<float>(rng, 3, 16, 16);
  const auto xe = oracle::random_image<float>(rng, 3, 16, 16);
  std::vector<Image> pool_images = {oracle::random_image<float>(rng, 3, 16, 16)};
  const MixPool<float> pool(pool_images);
  const SourceModel<float> src[1] = {{&f1, 1.0, "f1"}};
  auto base = AttackPlan::preset("i-fgsm");
  base.seed = 42;
  const auto want = iterative_attack<float>(base, src, x, xe).delta;
  std::vector<std::string> broken;
  auto check = [&](const char* name, AttackPlan p) {
    if (iterative_attack<float>(p, src, x, xe, pool, 0).delta != want) broken.push_back(name);
  };
  auto p = base;
  p.transforms.momentum = Momentum{0.0};
  check("mu=0", p);
  p = base;
  p.transforms.diverse_input = DiverseInput{0.0, 0.9};
  check("p=0", p);
  p = base;
  p.transforms.scale_invariant = ScaleInvariant{1};
  check("scales{1}", p);
  p = base;
  p.transforms.admix = Admix{0.0, 3};
  check("eta=0", p);
  if (lmfap::lmfap<float>(base, f1, f2, 0.0, x, xe).delta != lfap<float>(base, f1, x, xe).delta)
    broken.push_back("lambda=0");
  std::string list;
  for (const auto& b : broken) list += " " + b;
  return {broken.empty(), broken.empty() ? "mu=0, p=0, scales{1}, eta=0, lambda=0 all bitwise equal"
                                         : "differs:" + list};
}

Verdict metric_examples() {
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) bad.push_back(what);
  };
  expect(AsrCounts{100, 95, 20}.rate() == 0.75, "asr 95/20/100");
  expect(AsrCounts{50, 40, 40}.rate() == 0.0, "asr no effect");
  expect(AsrCounts{50, 40, 0}.rate() == 40.0 / 50.0, "asr total break");
  const SsimConfig cfg;
  expect(cfg.d1 == 0.01 && cfg.d2 == 0.03, "ssim constants");
  Rng rng(9);
  const auto img = oracle::random_image<float>(rng, 3, 12, 12);
  expect(ssim(img, img) == 1.0, "ssim identity");
  const std::vector<double> a = {10, 20, 30, 40}, b = {12, 18, 33, 41};
  double ma = 25, mb = 26, va = 0, vb = 0, cov = 0;
  for (int i = 0; i < 4; ++i) {
    va += (a[i] - ma) * (a[i] - ma) / 4;
    vb += (b[i] - mb) * (b[i] - mb) / 4;
    cov += (a[i] - ma) * (b[i] - mb) / 4;
  }
  const double c1 = 2.55 * 2.55, c2 = 7.65 * 7.65;
  const double want = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  expect(std::abs(ssim_window(a, b) - want) <= 1e-15, "ssim 2x2 hand statistics");
  std::string list;
  for (const auto& s : bad) list += " " + s;
  return {bad.empty(), bad.empty() ? "ASR and SSIM examples exact" : "failed:" + list};
}

// ---------------------------------------------------------------------------
// Desk-scale experiments

constexpr std::size_t kSubjects = 40;
constexpr std::size_t kTrainImages = 20;
constexpr std::size_t kHeldOut = 10;  // per subject, disjoint from every training set
constexpr std::size_t kTestPairs = 100;
constexpr float kTexture = 3.0f;

struct Trained {
  Embedder<float> model;
  double seconds = 0;
  bool cached = false;
};

Trained train_cached(const fs::path& work, const std::string& name, TrainConfig cfg, const LabeledDataset& data) {
  cfg.dataset_id = data.id;
  const auto base = work / (name + "-" + cfg.digest());
  Trained t;
  if (fs::exists(base.string() + ".ckpt") && fs::exists(base.string() + ".json")) {
    t.model = load_checkpoint<float>(base.string() + ".ckpt");
    t.seconds = nlohmann::json::parse(std::ifstream(base.string() + ".json")).at("seconds").get<double>();
    t.cached = true;
    return t;
  }
  const auto t0 = Clock::now();
  t.model = adversarial_train(cfg, data, [&](const EpochStats& s) {
    std::fprintf(stderr, "  %s epoch %d loss %.3f acc %.3f\n", name.c_str(), s.epoch, s.loss, s.accuracy);
  });
  t.seconds = since(t0);
  save_checkpoint(t.model, base.string() + ".ckpt");
  std::ofstream(base.string() + ".json") << nlohmann::json{{"seconds", t.seconds}, {"config", cfg.to_json()}}.dump(2);
  return t;
}

struct Desk {
  Trained standard, f1, f2;
  std::vector<Trained> target_models;
  std::vector<Target> targets;
  LabeledDataset held;
  double lambda = 0.6;

  const Image& held_image(std::size_t s, std::size_t i) const { return held.images[s * kHeldOut + i]; }

  // images 0-1 of each subject calibrate; pairs for testing come from 2..kHeldOut-1
  PairSet calibration() const {
    PairSet ps;
    for (std::size_t s = 0; s < kSubjects; ++s) {
      ps.add(held_image(s, 0), held_image(s, 1), s, PairLabel::positive);
      ps.add(held_image(s, 0), held_image((s + 7) % kSubjects, 1), s, PairLabel::negative);
    }
    return ps;
  }

  // every unordered positive pair among the test images
  PairSet all_positive_pairs() const {
    PairSet ps;
    for (std::size_t s = 0; s < kSubjects; ++s)
      for (std::size_t a = 2; a < kHeldOut; ++a)
        for (std::size_t b = a + 1; b < kHeldOut; ++b)
          ps.add(held_image(s, a), held_image(s, b), s, PairLabel::positive, fmt("s%zu-%zu-%zu", s, a, b));
    return ps;
  }

  PairSet test_pairs(std::uint64_t seed) const {
    Rng rng = derive_rng(seed, stream_id("acceptance:pairs"));
    PairSet ps;
    for (std::size_t k = 0; k < kTestPairs; ++k) {
      const std::size_t s = k % kSubjects;
      const std::size_t a = 2 + uniform_index(rng, kHeldOut - 2);
      std::size_t b = 2 + uniform_index(rng, kHeldOut - 3);
      if (b >= a) ++b;
      ps.add(held_image(s, a), held_image(s, b), s, PairLabel::positive, fmt("s%zu-%zu-%zu", s, a, b));
    }
    return ps;
  }
};

synthetic::Config data_config(std::size_t first, std::size_t images) {
  synthetic::Config c;
  c.subjects = kSubjects;
  c.images_per_subject = images;
  c.first_image = first;
  c.texture_gain = kTexture;
  return c;
}

Desk build_desk(const fs::path& work) {
  Desk d;
  const auto source_data = synthetic::make_dataset(data_config(0, kTrainImages));
  const auto target_data = synthetic::make_dataset(data_config(100, kTrainImages));
  d.held = synthetic::make_dataset(data_config(500, kHeldOut));

  auto std_cfg = TrainConfig::standard(20);
  std_cfg.seed = 1;
  d.standard = train_cached(work, "standard", std_cfg, source_data);
  auto f1_cfg = TrainConfig::prime();
  f1_cfg.epochs = 30;
  f1_cfg.lr_milestones = {20, 27};
  f1_cfg.seed = 2;
  d.f1 = train_cached(work, "f1", f1_cfg, source_data);
  auto f2_cfg = TrainConfig::subprime();
  f2_cfg.epochs = 15;
  f2_cfg.seed = 3;
  d.f2 = train_cached(work, "f2", f2_cfg, source_data);

  struct TargetSpec {
    const char* name;
    const char* arch;
    std::uint64_t seed;
  };
  for (const auto& spec : {TargetSpec{"target-conv3", "conv3-w24", 11}, TargetSpec{"target-conv4", "conv4-w24", 13}}) {
    auto cfg = TrainConfig::standard(20);
    cfg.architecture = spec.arch;
    cfg.seed = spec.seed;
    d.target_models.push_back(train_cached(work, spec.name, cfg, target_data));
  }
  const auto cal = d.calibration();
  const char* names[] = {"target-conv3", "target-conv4"};
  for (std::size_t i = 0; i < d.target_models.size(); ++i) {
    d.targets.push_back(make_target(d.target_models[i].model, names[i], cal));
    std::fprintf(stderr, "  %s: tau %.3f, calibration accuracy %.3f\n", names[i], d.targets.back().rule.threshold,
                 d.targets.back().clean_accuracy);
  }
  return d;
}

using Attack = std::function<PerturbationResult<float>(const Image&, const Image&, const MixPool<float>&, std::size_t)>;

Attack single_source(const Embedder<float>& m, const std::string& id, AttackPlan plan) {
  return [&m, id, plan](const Image& x, const Image& xe, const MixPool<float>& pool, std::size_t i) {
    const SourceModel<float> src[1] = {{&m, 1.0, id}};
    return iterative_attack<float>(plan, src, x, xe, pool, i);
  };
}

Attack lfap_attack(const Desk& d, AttackPlan plan) {
  return [&d, plan](const Image& x, const Image& xe, const MixPool<float>& pool, std::size_t i) {
    return lfap<float>(plan, d.f1.model, x, xe, pool, i);
  };
}

Attack lmfap_attack(const Desk& d, AttackPlan plan, double lambda) {
  return [&d, plan, lambda](const Image& x, const Image& xe, const MixPool<float>& pool, std::size_t i) {
    return lmfap::lmfap<float>(plan, d.f1.model, d.f2.model, lambda, x, xe, pool, i);
  };
}

AttackPlan plan_for(const char* name, std::uint64_t seed) {
  auto p = AttackPlan::preset(name);
  p.seed = seed;
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance gate"};
  std::string workdir = "acceptance-work";
  Gate gate;
  app.add_option("--workdir", workdir, "Cache for trained models");
  app.add_option("--only", gate.only, "Run only these criterion numbers");
  bool report_only = false;
  app.add_flag("--report-only", report_only, "Exit 0 once every criterion has been evaluated, even with FAIL lines");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);
  gate.log.open(fs::path(workdir) / "acceptance-report.txt");
  const auto t_all = Clock::now();

  gate.run(1, "constraint-suite", constraint_suite);
  gate.run(2, "gradient-suite", gradient_suite);
  gate.run(3, "transform-identities", transform_identities);
  gate.run(4, "codec-suite", codec_suite);
  gate.run(5, "reduction-lattice", reduction_lattice);

  std::optional<Desk> desk;
  auto world = [&]() -> Desk& {
    if (!desk) desk = build_desk(workdir);
    return *desk;
  };
  const Quality q50 = 50;
  std::vector<std::pair<std::string, double>> ssim_log;  // LFAP/LMFAP sets for criterion 11
  auto note_ssim = [&](const std::string& what, const EvalRow& r) { ssim_log.emplace_back(what, r.ssim_mean); };

  gate.run(6, "robust-spectrum-trend", [&] {
    auto& d = world();
    const auto pairs = d.test_pairs(0);
    const auto fg = plan_for("fgsm", 0);
    const auto s = run_attack("fgsm", {"standard"}, 0, pairs, single_source(d.standard.model, "standard", fg));
    const auto r = run_attack("fgsm", {"f1"}, 0, pairs, single_source(d.f1.model, "f1", fg));
    std::size_t wins = 0;
    double ms = 0, mr = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double fs_ = band_spectrum(s.delta[i]).fraction(1, 20), fr = band_spectrum(r.delta[i]).fraction(1, 20);
      wins += fr > fs_;
      ms += fs_ / double(pairs.size()), mr += fr / double(pairs.size());
    }
    const double train = d.standard.seconds + d.f1.seconds + d.f2.seconds;
    return Verdict{wins >= 80 && train <= 1800,
                   fmt("robust > standard on %zu/100 pairs (need 80); mean band 1-20 share %.3f vs %.3f; "
                       "training %.0fs (limit 1800s)%s",
                       wins, mr, ms, train, d.f1.cached ? ", from cache" : "")};
  });

  gate.run(7, "jpeg-attenuation-trend", [&] {
    auto& d = world();
    const auto pairs = d.test_pairs(0);
    std::vector<Image> originals, adversarial;
    for (const auto& set : {run_attack("i-fgsm", {}, 0, pairs, single_source(d.standard.model, "standard", plan_for("i-fgsm", 0))),
                            run_attack("lmfap", {}, 0, pairs, lmfap_attack(d, plan_for("i-fgsm", 0), d.lambda))})
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        originals.push_back(pairs.probes[i]);
        adversarial.push_back(set.adv[i]);
      }
    const auto removed = jpeg_attenuation_profile<float>(originals, adversarial, 50);
    const double high = removed.mean_over(51, removed.bands()), low = removed.mean_over(1, 20);
    return Verdict{high >= 2 * low, fmt("mean removed energy per band: bands>50 %.4g, bands<=20 %.4g, ratio %.2f (need 2)",
                                        high, low, high / low)};
  });

  gate.run(8, "jpeg50-transfer-trend", [&] {
    auto& d = world();
    const auto& target = d.targets[0];
    double asr[3][2] = {};  // standard, lfap, lmfap x {none, 50}
    double worst_run = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto t0 = Clock::now();
      const auto pairs = d.test_pairs(seed);
      const auto plan = plan_for("i-fgsm", seed);
      const AdvSet sets[3] = {run_attack("standard", {"standard"}, seed, pairs,
                                         single_source(d.standard.model, "standard", plan)),
                              run_attack("lfap", {"f1"}, seed, pairs, lfap_attack(d, plan)),
                              run_attack("lmfap", {"f1", "f2"}, seed, pairs, lmfap_attack(d, plan, d.lambda))};
      for (int a = 0; a < 3; ++a) {
        const auto none = evaluate_row(sets[a], pairs, target, std::nullopt);
        asr[a][0] += none.asr / 3;
        asr[a][1] += evaluate_row(sets[a], pairs, target, q50).asr / 3;
        if (a > 0) note_ssim(sets[a].attack_id, none);
      }
      worst_run = std::max(worst_run, since(t0));
    }
    const double drop_std = asr[0][0] - asr[0][1], drop_lm = asr[2][0] - asr[2][1];
    const bool order = asr[2][1] > asr[1][1] && asr[1][1] > asr[0][1];
    return Verdict{order && drop_lm <= drop_std && worst_run < 1200,
                   fmt("q50 ASR lmfap %.1f%% > lfap %.1f%% > standard %.1f%%: %s; drop none->q50 lmfap %.1f vs "
                       "standard %.1f; slowest run %.0fs",
                       100 * asr[2][1], 100 * asr[1][1], 100 * asr[0][1], order ? "yes" : "no", 100 * drop_lm,
                       100 * drop_std, worst_run)};
  });

  gate.run(9, "incorporation-trend", [&] {
    auto& d = world();
    const auto pairs = d.test_pairs(0);
    std::string detail;
    bool all = true;
    for (const char* base : {"fgsm", "mi", "di-mi"}) {
      const auto plan = plan_for(base, 0);
      const auto plain = run_attack(base, {"standard"}, 0, pairs, single_source(d.standard.model, "standard", plan));
      const auto lm = run_attack(std::string(base) + "-lmfap", {"f1", "f2"}, 0, pairs, lmfap_attack(d, plan, d.lambda));
      for (const auto& t : d.targets) {
        const auto rb = evaluate_row(plain, pairs, t, q50), rl = evaluate_row(lm, pairs, t, q50);
        all &= rl.asr > rb.asr;
        detail += fmt("%s%s@%s %.0f>%.0f", detail.empty() ? "" : ", ", base, t.id.c_str() + 7, 100 * rl.asr,
                      100 * rb.asr);
        note_ssim(lm.attack_id, rl);
      }
    }
    return Verdict{all, "q50 ASR% lmfap>base: " + detail};
  });

  gate.run(10, "lambda-trend", [&] {
    auto& d = world();
    const auto pairs = d.test_pairs(0);
    const auto plan = plan_for("i-fgsm", 0);
    const auto baseline =
        evaluate_row(run_attack("standard", {}, 0, pairs, single_source(d.standard.model, "standard", plan)), pairs,
                     d.targets[0], q50)
            .asr;
    const auto curve = lambda_ablation(d.f1.model, d.f2.model, {0.1, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}, plan, pairs,
                                       d.targets[0], q50);
    double lo = 1e9, hi = -1e9;
    std::string pts;
    for (const auto& p : curve) {
      if (p.x >= 0.4 - 1e-9) lo = std::min(lo, p.asr), hi = std::max(hi, p.asr);
      pts += fmt(" %.1f:%.0f", p.x, 100 * p.asr);
    }
    const double span = 100 * (hi - lo);
    return Verdict{span <= 5.0 && curve.front().asr > baseline,
                   fmt("spread over lambda>=0.4 %.1f pts (limit 5); lambda=0.1 %.1f%% vs standard %.1f%%; curve%s",
                       span, 100 * curve.front().asr, 100 * baseline, pts.c_str())};
  });

  gate.run(11, "ssim-gate", [&] {
    auto& d = world();
    if (ssim_log.empty()) {
      const auto pairs = d.test_pairs(0);
      for (const char* base : {"i-fgsm", "di-mi"}) {
        note_ssim("lfap", evaluate_row(run_attack("lfap", {}, 0, pairs, lfap_attack(d, plan_for(base, 0))), pairs,
                                       d.targets[0], std::nullopt));
        note_ssim("lmfap", evaluate_row(run_attack("lmfap", {}, 0, pairs, lmfap_attack(d, plan_for(base, 0), d.lambda)),
                                        pairs, d.targets[0], std::nullopt));
      }
    }
    double mean = 0;
    std::map<std::string, std::pair<double, int>> by_attack;
    for (const auto& [name, v] : ssim_log) {
      mean += v / double(ssim_log.size());
      by_attack[name].first += v;
      by_attack[name].second++;
    }
    std::string parts;
    for (const auto& [name, acc] : by_attack) parts += fmt(" %s %.3f", name.c_str(), acc.first / acc.second);
    return Verdict{mean > 0.8, fmt("mean SSIM %.4f over %zu LFAP/LMFAP sets;%s", mean, ssim_log.size(), parts.c_str())};
  });

  gate.run(12, "stability", [&] {
    auto& d = world();
    const auto pairs = d.all_positive_pairs();
    const SourceModel<float> src[2] = {{&d.f1.model, 1.0, "f1"}, {&d.f2.model, d.lambda, "f2"}};
    const auto plan = plan_for("di-mi", 100);
    // seeds run plan.seed, plan.seed + 1, ...; the first five are the five-run experiment
    const auto ten = stability_report(plan, src, 10, pairs, d.targets[0], q50);
    const auto five = summarize_runs({ten.asr.begin(), ten.asr.begin() + 5});
    return Verdict{five.variance <= 2.0, fmt("DI-MI-LMFAP q50 ASR over 5 seeds on %zu pairs: mean %.2f%%, variance %.3f "
                                             "(limit 2.0); 10-seed mean %.2f%%",
                                             pairs.size(), five.mean, five.variance, ten.mean)};
  });

  gate.run(13, "metric-examples", metric_examples);

  const auto summary = fmt("acceptance: %zu passed, %zu failed, %.0fs", gate.passed, gate.failed, since(t_all));
  std::printf("%s\n", summary.c_str());
  gate.log << summary << std::endl;
  if (gate.only.empty() && gate.passed + gate.failed != 13) return 1;
  return gate.failed == 0 || report_only ? 0 : 1;
}
