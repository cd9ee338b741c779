#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmfap/attack.hpp"
#include "lmfap/embedder.hpp"
#include "lmfap/error.hpp"
#include "lmfap/imaging.hpp"
#include "lmfap/jpeg.hpp"
#include "lmfap/metrics.hpp"

namespace lmfap {

inline constexpr const char* kReportSchema = "lmfap.eval-report/1";

using Quality = std::optional<int>;  // nullopt: no compression

inline std::string quality_name(const Quality& q) { return q ? std::to_string(*q) : "none"; }

inline Quality parse_quality(const std::string& s) {
  if (s == "none" || s.empty()) return std::nullopt;
  std::size_t pos = 0;
  int q = 0;
  try {
    q = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw QualityOutOfRange("not a JPEG quality: '" + s + "'");
  }
  if (pos != s.size()) throw QualityOutOfRange("not a JPEG quality: '" + s + "'");
  require_quality(q);
  return q;
}

inline std::vector<Quality> parse_qualities(const std::string& list) {
  std::vector<Quality> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = std::min(list.find(',', start), list.size());
    out.push_back(parse_quality(list.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pairs, targets and adversarial sets

/// Decoded pairs. subjects are dense indices used to keep ADMIX pools
/// free of the probe's own identity.
struct PairSet {
  std::vector<Image> probes, enrolled;
  std::vector<std::size_t> subjects;
  std::vector<PairLabel> labels;
  std::vector<std::string> probe_names;

  std::size_t size() const noexcept { return probes.size(); }

  void add(Image probe, Image enr, std::size_t subject, PairLabel label, std::string name = {}) {
    probes.push_back(std::move(probe));
    enrolled.push_back(std::move(enr));
    subjects.push_back(subject);
    labels.push_back(label);
    probe_names.push_back(std::move(name));
  }

  PairSet only(PairLabel l) const {
    PairSet out;
    for (std::size_t i = 0; i < size(); ++i)
      if (labels[i] == l) out.add(probes[i], enrolled[i], subjects[i], labels[i], probe_names[i]);
    return out;
  }

  MixPool<float> pool_for(std::size_t i) const { return MixPool<float>(enrolled, subjects, subjects[i]); }
};

inline PairSet load_pair_set(const PairManifest& m, std::size_t side = kDefaultSide) {
  PairSet ps;
  std::map<std::string, std::size_t> ids;
  ImageCache cache(side);
  for (const auto& e : m.entries) {
    const auto id = ids.emplace(e.subject_id, ids.size()).first->second;
    ps.add(cache.get(e.probe_path), cache.get(e.enrolled_path), id, e.label,
           std::filesystem::path(e.probe_path).filename().string());
  }
  return ps;
}

struct Target {
  const Embedder<float>* model = nullptr;
  VerificationRule rule;
  std::string id;
  double clean_accuracy = 0;
};

/// Target whose threshold is calibrated on a mixed positive/negative split.
inline Target make_target(const Embedder<float>& model, std::string id, const PairSet& calibration) {
  const auto d = pair_distances<float>(model, calibration.probes, calibration.enrolled);
  const auto cal = calibrate_threshold(d, calibration.labels);
  return {&model, cal.rule, std::move(id), cal.accuracy};
}

struct AdvSet {
  std::string attack_id;
  std::vector<std::string> source_ids;
  std::uint64_t seed = 0;
  std::vector<Image> adv;
  std::vector<Image> delta;
};

using PairAttack = std::function<PerturbationResult<float>(const Image& x, const Image& x_e, const MixPool<float>& pool,
                                                           std::size_t pair_id)>;

/// Runs an attack over every pair; pair i draws its randomness from stream i.
inline AdvSet run_attack(std::string attack_id, std::vector<std::string> source_ids, std::uint64_t seed,
                         const PairSet& pairs, const PairAttack& attack) {
  AdvSet out{std::move(attack_id), std::move(source_ids), seed, {}, {}};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto r = attack(pairs.probes[i], pairs.enrolled[i], pairs.pool_for(i), i);
    out.adv.push_back(std::move(r.adv_image));
    out.delta.push_back(std::move(r.delta));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct EvalRow {
  std::string attack_id;
  std::vector<std::string> source_ids;
  std::string target_id;
  Quality jpeg_quality;
  std::uint64_t seed = 0;
  double asr = 0;
  double ssim_mean = 0;
  std::size_t n_pairs = 0;
  std::size_t n_recognized = 0;
  std::size_t n_recognized_adv = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::map<std::string, std::string> provenance;  // name -> config digest

  void append(const EvalReport& o) {
    rows.insert(rows.end(), o.rows.begin(), o.rows.end());
    for (const auto& [k, v] : o.provenance) provenance[k] = v;
  }

  const EvalRow* find(const std::string& attack, const std::string& target, const Quality& q) const {
    for (const auto& r : rows)
      if (r.attack_id == attack && r.target_id == target && r.jpeg_quality == q) return &r;
    return nullptr;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = kReportSchema;
    j["provenance"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : provenance) j["provenance"][k] = v;
    auto& rs = j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json o;
      o["attack_id"] = r.attack_id;
      o["source_ids"] = r.source_ids;
      o["target_id"] = r.target_id;
      o["jpeg_quality"] = quality_name(r.jpeg_quality);
      o["seed"] = r.seed;
      o["asr"] = r.asr;
      o["ssim_mean"] = r.ssim_mean;
      o["n_pairs"] = r.n_pairs;
      o["n_recognized"] = r.n_recognized;
      o["n_recognized_adv"] = r.n_recognized_adv;
      rs.push_back(std::move(o));
    }
    return j;
  }

  /// ASR in percent.
  void write_csv(std::ostream& os) const {
    os << "attack_id,source_ids,target_id,jpeg_quality,seed,asr_percent,ssim_mean,n_pairs\n";
    char buf[64];
    for (const auto& r : rows) {
      std::string src;
      for (const auto& s : r.source_ids) src += (src.empty() ? "" : "+") + s;
      os << r.attack_id << ',' << src << ',' << r.target_id << ',' << quality_name(r.jpeg_quality) << ',' << r.seed;
      std::snprintf(buf, sizeof buf, ",%.4f,%.6f,", 100.0 * r.asr, r.ssim_mean);
      os << buf << r.n_pairs << '\n';
    }
  }
};

/// One report row: the probes of positive pairs are replaced by the
/// adversarial images, optionally compressed. SSIM is measured before compression.
inline EvalRow evaluate_row(const AdvSet& adv, const PairSet& positives, const Target& target, const Quality& q) {
  if (adv.adv.size() != positives.size()) throw PairCountMismatch("adversarial set does not match the pair set");
  const auto clean = pair_distances<float>(*target.model, positives.probes, positives.enrolled);
  std::vector<double> after(positives.size());
  double s = 0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const auto probe = q ? jpeg_roundtrip(adv.adv[i], *q) : adv.adv[i];
    after[i] = double(pair_distance(*target.model, probe, positives.enrolled[i]));
    s += ssim(positives.probes[i], adv.adv[i]);
  }
  const auto c = count_recognized(target.rule, clean, after);
  EvalRow r;
  r.attack_id = adv.attack_id;
  r.source_ids = adv.source_ids;
  r.target_id = target.id;
  r.jpeg_quality = q;
  r.seed = adv.seed;
  r.asr = c.rate();
  r.ssim_mean = positives.size() ? s / double(positives.size()) : 0;
  r.n_pairs = c.total;
  r.n_recognized = c.recognized;
  r.n_recognized_adv = c.recognized_adv;
  return r;
}

inline EvalReport jpeg_sweep(const AdvSet& adv, const PairSet& positives, const Target& target,
                             const std::vector<Quality>& qualities) {
  EvalReport rep;
  for (const auto& q : qualities) rep.rows.push_back(evaluate_row(adv, positives, target, q));
  return rep;
}

/// Every (attack, target, quality) combination. Targets that served as a
/// source of an attack are skipped unless white-box rows are requested.
inline EvalReport transfer_matrix(const std::vector<AdvSet>& adv_sets, const PairSet& positives,
                                  const std::vector<Target>& targets, const std::vector<Quality>& qualities,
                                  bool include_white_box = false) {
  if (targets.empty()) throw NoTargets("transfer matrix needs at least one target model");
  EvalReport rep;
  for (const auto& a : adv_sets)
    for (const auto& t : targets) {
      const bool is_source = std::find(a.source_ids.begin(), a.source_ids.end(), t.id) != a.source_ids.end();
      if (is_source && !include_white_box) continue;
      rep.append(jpeg_sweep(a, positives, t, qualities));
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Ablations

struct CurvePoint {
  double x = 0;
  double asr = 0;
};

inline std::vector<double> parse_grid(const std::string& spec) {
  // lo:hi:step, inclusive of hi up to rounding
  double lo = 0, hi = 0, step = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || !(step > 0) || hi < lo)
    throw InvalidConfig("grid must look like lo:hi:step, got '" + spec + "'");
  std::vector<double> g;
  const long n = std::lround(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) g.push_back(std::round((lo + double(i) * step) * 1e12) / 1e12);
  return g;
}

/// ASR of the f1/f2 ensemble attack for each lambda in the grid.
inline std::vector<CurvePoint> lambda_ablation(const Embedder<float>& f1, const Embedder<float>& f2,
                                               const std::vector<double>& grid, const AttackPlan& plan,
                                               const PairSet& positives, const Target& target, const Quality& q) {
  std::vector<CurvePoint> curve;
  for (double lambda : grid) {
    if (!(lambda >= 0 && lambda <= 1)) throw InvalidConfig("lambda grid must lie in [0,1]");
    const auto adv = run_attack("lmfap", {}, plan.seed, positives,
                                [&](const Image& x, const Image& xe, const MixPool<float>& pool, std::size_t i) {
                                  return lmfap<float>(plan, f1, f2, lambda, x, xe, pool, i);
                                });
    curve.push_back({lambda, evaluate_row(adv, positives, target, q).asr});
  }
  return curve;
}

/// Standard-model noise, mid-frequency noise (f2), low-frequency noise (f1)
/// and the low-mid ensemble, in that order.
inline EvalReport frequency_ablation(const Embedder<float>& standard, const Embedder<float>& f1,
                                     const Embedder<float>& f2, double lambda, const AttackPlan& plan,
                                     const PairSet& positives, const Target& target, const Quality& q) {
  auto single = [&](const Embedder<float>& m) {
    return [&m, &plan](const Image& x, const Image& xe, const MixPool<float>& pool, std::size_t i) {
      const SourceModel<float> src[1] = {{&m, 1.0, m.info().config_digest}};
      return iterative_attack<float>(plan, src, x, xe, pool, i);
    };
  };
  EvalReport rep;
  rep.rows.push_back(evaluate_row(run_attack("standard", {"standard"}, plan.seed, positives, single(standard)),
                                  positives, target, q));
  rep.rows.push_back(evaluate_row(run_attack("mid", {"f2"}, plan.seed, positives, single(f2)), positives, target, q));
  rep.rows.push_back(evaluate_row(run_attack("low", {"f1"}, plan.seed, positives, single(f1)), positives, target, q));
  rep.rows.push_back(evaluate_row(
      run_attack("low-mid", {"f1", "f2"}, plan.seed, positives,
                 [&](const Image& x, const Image& xe, const MixPool<float>& pool, std::size_t i) {
                   return lmfap<float>(plan, f1, f2, lambda, x, xe, pool, i);
                 }),
      positives, target, q));
  return rep;
}

struct Stability {
  std::vector<double> asr;  // one per run, fraction
  double mean = 0;          // percent
  double variance = 0;      // percent squared, sample variance (n - 1)
};

inline Stability summarize_runs(std::vector<double> asr) {
  Stability s;
  s.asr = std::move(asr);
  const double n = double(s.asr.size());
  for (double a : s.asr) s.mean += 100.0 * a / n;
  if (s.asr.size() > 1) {
    for (double a : s.asr) s.variance += (100.0 * a - s.mean) * (100.0 * a - s.mean);
    s.variance /= n - 1;
  }
  return s;
}

/// Repeats an attack under seeds plan.seed, plan.seed + 1, ... and summarizes its ASR.
inline Stability stability_report(const AttackPlan& plan, std::span<const SourceModel<float>> sources,
                                  std::size_t n_runs, const PairSet& positives, const Target& target,
                                  const Quality& q) {
  std::vector<double> asr;
  for (std::size_t r = 0; r < n_runs; ++r) {
    AttackPlan p = plan;
    p.seed = plan.seed + r;
    const auto adv = run_attack(plan.name, {}, p.seed, positives,
                                [&](const Image& x, const Image& xe, const MixPool<float>& pool, std::size_t i) {
                                  return iterative_attack<float>(p, sources, x, xe, pool, i);
                                });
    asr.push_back(evaluate_row(adv, positives, target, q).asr);
  }
  return summarize_runs(std::move(asr));
}

}  // namespace lmfap
