#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lmfap/attack.hpp"
#include "lmfap/checkpoint.hpp"
#include "lmfap/dataset.hpp"
#include "lmfap/eval.hpp"
#include "lmfap/freq_lab.hpp"
#include "lmfap/plot.hpp"
#include "lmfap/synthetic.hpp"
#include "lmfap/train.hpp"

using namespace lmfap;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

AttackPlan read_plan(const std::string& path) {
  if (path.empty()) return AttackPlan::preset("i-fgsm");
  if (!fs::exists(path)) return AttackPlan::preset(path);
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open plan " + path);
  try {
    return AttackPlan::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidPlan(path + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << '\n';
}

// eval inputs from an attack output directory
struct AdvDir {
  AdvSet set;
  PairSet positives;
  std::string manifest;
};

AdvDir read_adv_dir(const fs::path& dir, std::size_t side) {
  std::ifstream meta(dir / "metadata.jsonl");
  if (!meta) throw IoFailure("no metadata.jsonl in " + dir.string());
  const auto run = nlohmann::json::parse(std::ifstream(dir / "run.json"));
  AdvDir out;
  out.manifest = run.at("pairs").get<std::string>();
  out.set.attack_id = run.at("attack_id").get<std::string>();
  out.set.source_ids = run.at("source_ids").get<std::vector<std::string>>();
  out.set.seed = run.at("plan").at("seed").get<std::uint64_t>();
  ImageCache cache(side);
  std::map<std::string, std::size_t> subjects;
  std::string line;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto subject = j.at("subject").get<std::string>();
    const auto id = subjects.emplace(subject, subjects.size()).first->second;
    const auto& probe = cache.get(j.at("probe").get<std::string>());
    out.positives.add(probe, cache.get(j.at("enrolled").get<std::string>()), id, PairLabel::positive);
    auto adv = load_image(dir / j.at("adv_image").get<std::string>(), side);
    out.set.delta.push_back(adv - probe);
    out.set.adv.push_back(std::move(adv));
  }
  if (out.positives.size() == 0) throw EmptyManifest("no adversarial pairs in " + dir.string());
  return out;
}

struct Targets {
  std::vector<Embedder<float>> models;
  std::vector<Target> targets;
  std::map<std::string, std::string> provenance;
};

Targets load_targets(const std::vector<std::string>& paths, const PairSet& calibration) {
  Targets t;
  t.models.reserve(paths.size());
  for (const auto& p : paths) t.models.push_back(load_checkpoint<float>(p));
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto id = stem(paths[i]);
    t.targets.push_back(make_target(t.models[i], id, calibration));
    t.provenance[id] = t.models[i].info().config_digest;
    std::fprintf(stderr, "target %s: tau %.4f, calibration accuracy %.3f\n", id.c_str(),
                 t.targets.back().rule.threshold, t.targets.back().clean_accuracy);
  }
  return t;
}

void emit_report(const EvalReport& rep, const fs::path& dir) {
  fs::create_directories(dir / "plots");
  write_json(rep.to_json(), dir / "report.json");
  std::ofstream csv(dir / "tables.csv");
  rep.write_csv(csv);
  // one bar group per attack/target, one bar per quality
  std::vector<std::string> cats, quals;
  std::vector<std::vector<double>> vals;
  std::map<std::string, std::size_t> cat_index;
  for (const auto& r : rep.rows) {
    const auto q = quality_name(r.jpeg_quality);
    if (std::find(quals.begin(), quals.end(), q) == quals.end()) quals.push_back(q);
  }
  for (const auto& r : rep.rows) {
    const auto key = r.attack_id + ">" + r.target_id;
    auto [it, fresh] = cat_index.emplace(key, cats.size());
    if (fresh) {
      cats.push_back(key);
      vals.emplace_back(quals.size(), 0.0);
    }
    const auto q = std::find(quals.begin(), quals.end(), quality_name(r.jpeg_quality)) - quals.begin();
    vals[it->second][std::size_t(q)] = 100 * r.asr;
  }
  std::vector<std::string> labels;
  for (const auto& q : quals) labels.push_back("jpeg " + q);
  save_image(plot::bar_plot(cats, labels, vals, {"ASR by JPEG quality", "", "ASR %", false, 160 + 90 * cats.size(), 420}),
             dir / "plots" / "jpeg_sweep.png");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-frequency adversarial perturbation toolkit for face recognition"};
  app.require_subcommand(1);
  std::size_t side = kDefaultSide;
  app.add_option("--side", side, "Input side length")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Render a synthetic identity folder and pair manifests");
  synthetic::Config sc;
  std::string synth_out;
  std::size_t n_pairs = 100;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--subjects", sc.subjects)->capture_default_str();
  synth->add_option("--images", sc.images_per_subject, "Images per subject")->capture_default_str();
  synth->add_option("--first", sc.first_image, "First image index")->capture_default_str();
  synth->add_option("--seed", sc.seed)->capture_default_str();
  synth->add_option("--texture", sc.texture_gain, "Skin texture gain")->capture_default_str();
  synth->add_option("--pairs", n_pairs, "Positive and negative pairs to list")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train an embedder, optionally with PGD adversarial training");
  TrainConfig tc;
  std::string data_dir, ckpt_out, milestones;
  train->add_option("--radius", tc.radius, "PGD radius in 0-255 pixel units")->required();
  train->add_option("--epochs", tc.epochs)->required();
  train->add_option("--data", data_dir, "Folder with one subdirectory per identity, or a synth output root")->required();
  train->add_option("--out", ckpt_out)->required();
  train->add_option("--seed", tc.seed)->capture_default_str();
  train->add_option("--milestones", milestones, "Epochs where lr drops by 10, e.g. 30,45");
  train->add_option("--arch", tc.architecture)->capture_default_str();
  train->add_option("--lr", tc.lr)->capture_default_str();
  train->add_option("--batch", tc.batch_size)->capture_default_str();
  train->add_option("--inner-steps", tc.inner_steps)->capture_default_str();

  // attack
  auto* attack = app.add_subcommand("attack", "Generate adversarial probes for the positive pairs of a manifest");
  std::string plan_path, pairs_path, sources, adv_out, attack_quality = "none";
  double lambda = 0.6;
  std::uint64_t attack_seed = 0;
  bool seed_given = false;
  attack->add_option("--plan", plan_path, "Attack plan JSON or preset name (fgsm, mi, di-mi, ...); defaults to I-FGSM");
  attack->add_option("--pairs", pairs_path, "TSV manifest: probe, enrolled, subject, label")->required();
  attack->add_option("--source", sources, "f1 checkpoint, optionally followed by ,f2")->required();
  attack->add_option("--lambda", lambda, "Weight of the second source")->capture_default_str();
  attack->add_option("--out", adv_out)->required();
  attack->add_option("--jpeg-quality", attack_quality, "Save adversarial images as JPEG at this quality, or none");
  attack->add_option("--seed", attack_seed, "Overrides the plan seed")->each([&](const std::string&) { seed_given = true; });

  // eval
  auto* eval = app.add_subcommand("eval", "Transfer ASR and SSIM of attack outputs against target models");
  std::string adv_dirs, target_list, qualities = "none,75,50", report_dir = "report", calib_path;
  bool white_box = false;
  eval->add_option("--adv", adv_dirs, "Attack output directories, comma separated")->required();
  eval->add_option("--targets", target_list, "Target checkpoints, comma separated")->required();
  eval->add_option("--qualities", qualities)->capture_default_str();
  eval->add_option("--report", report_dir)->capture_default_str();
  eval->add_option("--calibration", calib_path, "Manifest with both labels for thresholds; defaults to the attack's");
  eval->add_flag("--white-box", white_box, "Keep rows where the target was also a source");

  // analyze-freq
  auto* freq = app.add_subcommand("analyze-freq", "Frequency sensitivity of a model and spectra of its perturbations");
  std::string freq_model, freq_pairs, freq_out = "freq", freq_plan;
  std::size_t n_lo = 1, n_hi = 0;
  int freq_q = 50;
  freq->add_option("--model", freq_model)->required();
  freq->add_option("--pairs", freq_pairs)->required();
  freq->add_option("--out", freq_out)->capture_default_str();
  freq->add_option("--plan", freq_plan, "Plan for the perturbations whose spectra are measured");
  freq->add_option("--from", n_lo, "First DCT component removed")->capture_default_str();
  freq->add_option("--to", n_hi, "Last DCT component removed; 0 means all")->capture_default_str();
  freq->add_option("--jpeg-quality", freq_q, "Quality for the attenuation profile")->capture_default_str();

  // sweep-lambda
  auto* sweep = app.add_subcommand("sweep-lambda", "ASR of the two-source attack over a grid of lambda");
  std::string grid = "0:1:0.1", f1_path, f2_path, sweep_target, sweep_pairs, sweep_plan, sweep_report = "sweep",
              sweep_q = "none";
  sweep->add_option("--grid", grid, "lo:hi:step")->capture_default_str();
  sweep->add_option("--f1", f1_path)->required();
  sweep->add_option("--f2", f2_path)->required();
  sweep->add_option("--target", sweep_target)->required();
  sweep->add_option("--pairs", sweep_pairs)->required();
  sweep->add_option("--plan", sweep_plan);
  sweep->add_option("--jpeg-quality", sweep_q)->capture_default_str();
  sweep->add_option("--report", sweep_report)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      sc.side = side;
      const auto ds = synthetic::make_dataset(sc);
      const fs::path root(synth_out);
      write_identity_folder(ds, root / "images");
      // positives pair image 2k with 2k+1 of one subject; negatives pair
      // subjects s and s+1
      PairManifest m;
      auto file = [&](std::size_t s, std::size_t i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%04zu.png", i);
        return (fs::path("images") / ds.class_names[s] / buf).string();
      };
      const std::size_t per = sc.images_per_subject;
      for (std::size_t k = 0; k < n_pairs; ++k) {
        const std::size_t s = k % sc.subjects, i = (2 * (k / sc.subjects)) % std::max<std::size_t>(per - 1, 1);
        m.entries.push_back({file(s, i), file(s, i + 1), ds.class_names[s], PairLabel::positive});
        const std::size_t o = (s + 1) % sc.subjects;
        m.entries.push_back({file(s, i), file(o, i + 1), ds.class_names[s], PairLabel::negative});
      }
      write_pairs(m, root / "pairs.tsv");
      std::printf("%zu images of %zu subjects, %zu pairs in %s\n", ds.size(), ds.num_classes(), m.size(),
                  synth_out.c_str());
      return 0;
    }

    if (*train) {
      for (const auto& s : split(milestones)) tc.lr_milestones.push_back(std::stoi(s));
      // accept the root written by synth as well as the identity folder itself
      const auto ds = load_identity_folder(fs::is_directory(fs::path(data_dir) / "images") ? fs::path(data_dir) / "images"
                                                                                           : fs::path(data_dir),
                                           side);
      tc.dataset_id = ds.id;
      const auto t0 = std::chrono::steady_clock::now();
      const auto model = adversarial_train(tc, ds, [&](const EpochStats& s) {
        std::fprintf(stderr, "epoch %3d  loss %.4f  acc %.3f  lr %.3g  %.0fs\n", s.epoch, s.loss, s.accuracy, s.lr,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      });
      save_checkpoint(model, ckpt_out);
      std::printf("%s  %s\n", ckpt_out.c_str(), model.info().config_digest.c_str());
      return 0;
    }

    if (*attack) {
      auto plan = read_plan(plan_path);
      if (seed_given) plan.seed = attack_seed;
      const auto save_q = parse_quality(attack_quality);
      const auto ckpts = split(sources);
      if (ckpts.empty() || ckpts.size() > 2) throw InvalidPlan("--source takes one or two checkpoints");
      std::vector<Embedder<float>> models;
      for (const auto& c : ckpts) models.push_back(load_checkpoint<float>(c));
      const auto manifest = load_pairs(pairs_path);
      const auto positives = manifest.only(PairLabel::positive);
      if (positives.size() == 0) throw EmptyManifest("manifest has no positive pairs");
      const auto ps = load_pair_set(positives, side);
      std::vector<std::string> source_ids;
      for (const auto& c : ckpts) source_ids.push_back(stem(c));
      const bool robust = models[0].info().provenance.robust();
      const std::string attack_id = plan.name + (models.size() == 2 ? "-lmfap" : robust ? "-lfap" : "");

      const fs::path out(adv_out);
      fs::create_directories(out / "images");
      std::ofstream meta(out / "metadata.jsonl");
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto pool = ps.pool_for(i);
        const SourceModel<float> single[1] = {{&models[0], 1.0, source_ids[0]}};
        auto r = models.size() == 2 ? lmfap::lmfap<float>(plan, models[0], models[1], lambda, ps.probes[i],
                                                          ps.enrolled[i], pool, i)
                 : robust           ? lfap<float>(plan, models[0], ps.probes[i], ps.enrolled[i], pool, i)
                                    : iterative_attack<float>(plan, single, ps.probes[i], ps.enrolled[i], pool, i);
        char name[48];
        std::snprintf(name, sizeof name, "%05zu.%s", i, save_q ? "jpg" : "png");
        save_image(r.adv_image, out / "images" / name, save_q ? SaveFormat::jpeg(*save_q) : SaveFormat::png());
        json j;
        j["pair"] = i;
        j["probe"] = fs::absolute(positives.entries[i].probe_path).string();
        j["enrolled"] = fs::absolute(positives.entries[i].enrolled_path).string();
        j["subject"] = positives.entries[i].subject_id;
        j["adv_image"] = (fs::path("images") / name).string();
        j["attack_id"] = attack_id;
        j["plan_digest"] = r.plan_digest;
        j["source_ids"] = source_ids;
        j["max_abs_delta"] = max_abs(r.delta) * 255.0;
        j["ssim"] = ssim(ps.probes[i], r.adv_image);
        j["per_step_loss"] = r.per_step_loss;
        j["warnings"] = r.warnings;
        meta << j.dump() << '\n';
        for (const auto& w : r.warnings)
          if (i == 0) std::fprintf(stderr, "warning: %s\n", w.c_str());
      }
      json run;
      run["attack_id"] = attack_id;
      run["pairs"] = fs::absolute(pairs_path).string();
      run["source_ids"] = source_ids;
      run["sources"] = json::array();
      for (std::size_t k = 0; k < models.size(); ++k)
        run["sources"].push_back({{"path", fs::absolute(ckpts[k]).string()},
                                  {"config_digest", models[k].info().config_digest},
                                  {"robust", models[k].info().provenance.robust()},
                                  {"radius", models[k].info().provenance.radius}});
      run["lambda"] = models.size() == 2 ? lambda : 0.0;
      run["plan"] = plan.to_json();
      run["saved_as"] = quality_name(save_q);
      write_json(run, out / "run.json");
      std::printf("%zu adversarial probes in %s\n", ps.size(), adv_out.c_str());
      return 0;
    }

    if (*eval) {
      const auto qs = parse_qualities(qualities);
      std::vector<AdvDir> dirs;
      for (const auto& d : split(adv_dirs)) dirs.push_back(read_adv_dir(d, side));
      const auto calib = load_pair_set(load_pairs(calib_path.empty() ? dirs.front().manifest : calib_path), side);
      auto targets = load_targets(split(target_list), calib);
      EvalReport rep;
      // source and target ids are both checkpoint stems, so white-box rows are recognised
      for (auto& d : dirs) rep.append(transfer_matrix({d.set}, d.positives, targets.targets, qs, white_box));
      rep.provenance = targets.provenance;
      emit_report(rep, report_dir);
      rep.write_csv(std::cout);
      return 0;
    }

    if (*freq) {
      const auto model = load_checkpoint<float>(freq_model);
      const auto all = load_pair_set(load_pairs(freq_pairs), side);
      const auto cal = calibrate_threshold(pair_distances<float>(model, all.probes, all.enrolled), all.labels);
      const auto pos = all.only(PairLabel::positive);
      const fs::path out(freq_out);
      fs::create_directories(out / "plots");
      if (n_hi == 0) n_hi = 2 * side - 1;
      const auto sweep_rows = masked_accuracy_sweep<float>(model, cal.rule, pos.probes, pos.enrolled, n_lo, n_hi);
      std::ofstream csv(out / "masked_accuracy.csv");
      csv << "n,accuracy,drop\n";
      plot::Series drop{"accuracy drop", {}, {}};
      for (const auto& r : sweep_rows) {
        csv << r.n << ',' << r.accuracy << ',' << r.drop << '\n';
        drop.x.push_back(double(r.n));
        drop.y.push_back(100 * r.drop);
      }
      save_image(plot::line_plot({drop}, {"Component removal", "n", "drop %"}), out / "plots" / "masked_accuracy.png");

      const auto plan = read_plan(freq_plan);
      const SourceModel<float> src[1] = {{&model, 1.0, stem(freq_model)}};
      const auto adv = run_attack(plan.name, {src[0].id}, plan.seed, pos,
                                  [&](const Image& x, const Image& xe, const MixPool<float>& pool, std::size_t i) {
                                    return iterative_attack<float>(plan, src, x, xe, pool, i);
                                  });
      const auto spectrum = mean_band_spectrum<float>(adv.delta);
      const auto removed = jpeg_attenuation_profile<float>(pos.probes, adv.adv, freq_q);
      std::ofstream(out / "perturbation_spectrum.csv") << [&] {
        std::ostringstream os;
        write_profile_csv(spectrum, os);
        return os.str();
      }();
      std::ofstream(out / "jpeg_attenuation.csv") << [&] {
        std::ostringstream os;
        write_profile_csv(removed, os);
        return os.str();
      }();
      plot::Series s1{"perturbation", {}, {}}, s2{"removed by jpeg " + std::to_string(freq_q), {}, {}};
      for (std::size_t b = 1; b <= spectrum.bands(); ++b) {
        s1.x.push_back(double(b)), s1.y.push_back(spectrum.band(b));
        s2.x.push_back(double(b)), s2.y.push_back(removed.band(b));
      }
      save_image(plot::line_plot({s1, s2}, {"Band energy", "band", "energy", true}), out / "plots" / "band_spectrum.png");
      json summary;
      summary["model"] = freq_model;
      summary["threshold"] = cal.rule.threshold;
      summary["calibration_accuracy"] = cal.accuracy;
      summary["band_1_20_fraction"] = spectrum.fraction(1, std::min<std::size_t>(20, spectrum.bands()));
      summary["robust"] = model.info().provenance.robust();
      write_json(summary, out / "summary.json");
      std::printf("%s\n", summary.dump(2).c_str());
      return 0;
    }

    if (*sweep) {
      const auto f1 = load_checkpoint<float>(f1_path), f2 = load_checkpoint<float>(f2_path);
      const auto tgt = load_checkpoint<float>(sweep_target);
      const auto all = load_pair_set(load_pairs(sweep_pairs), side);
      const auto target = make_target(tgt, stem(sweep_target), all);
      const auto plan = read_plan(sweep_plan);
      const auto curve =
          lambda_ablation(f1, f2, parse_grid(grid), plan, all.only(PairLabel::positive), target, parse_quality(sweep_q));
      const fs::path out(sweep_report);
      fs::create_directories(out / "plots");
      json j;
      j["schema"] = "lmfap.lambda-sweep/1";
      j["target"] = target.id;
      j["jpeg_quality"] = sweep_q;
      j["points"] = json::array();
      plot::Series s{"ASR", {}, {}};
      std::ofstream csv(out / "tables.csv");
      csv << "lambda,asr_percent\n";
      for (const auto& p : curve) {
        j["points"].push_back({{"lambda", p.x}, {"asr", p.asr}});
        csv << p.x << ',' << 100 * p.asr << '\n';
        s.x.push_back(p.x), s.y.push_back(100 * p.asr);
        std::printf("lambda %.3f  ASR %.2f%%\n", p.x, 100 * p.asr);
      }
      write_json(j, out / "report.json");
      save_image(plot::line_plot({s}, {"ASR over lambda", "lambda", "ASR %"}), out / "plots" / "lambda.png");
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
