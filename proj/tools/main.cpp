// restorerid: single entry point for corpus generation, training, restoration
// and evaluation. Exit codes: 0 success, 2 usage, 3 missing dependency, 4 I/O.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "restorerid/configfile.h"
#include "restorerid/pipeline.h"
#include "restorerid/run_manifest.h"

namespace fs = std::filesystem;
using namespace rid;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string default_cache() {
  const char* env = std::getenv("RESTORERID_CACHE");
  return env && *env ? env : "cache";
}

void add_ckpt_hashes(RunManifest& m, const std::string& cache,
                     std::initializer_list<const char*> names) {
  for (const char* n : names) {
    std::string p = ckpt_path(cache, n);
    if (fs::exists(p)) m.checkpoint_hashes[n] = std::to_string(file_hash(p));
  }
}

// tiny polyline plot of per-bucket sweep curves
void render_sweep_plot(const SweepResult& sr, const std::string& path) {
  const int W = 480, H = 320, m = 24;
  Image img(H, W);
  for (auto& v : img.data) v = 1.0f;
  double lo = 1e9, hi = -1e9;
  for (const auto& b : sr.buckets)
    for (double v : b.mean_id_sim) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi - lo < 1e-9) hi = lo + 1e-9;
  const float colors[][3] = {{0.8f, 0.1f, 0.1f}, {0.1f, 0.6f, 0.1f}, {0.1f, 0.2f, 0.8f},
                             {0.7f, 0.5f, 0.0f}, {0.5f, 0.0f, 0.7f}};
  for (size_t bi = 0; bi < sr.buckets.size(); ++bi) {
    const auto& ys = sr.buckets[bi].mean_id_sim;
    const float* col = colors[bi % 5];
    for (size_t j = 0; j + 1 < ys.size(); ++j) {
      double x0 = m + (W - 2.0 * m) * j / (ys.size() - 1);
      double x1 = m + (W - 2.0 * m) * (j + 1) / (ys.size() - 1);
      double y0 = H - m - (H - 2.0 * m) * (ys[j] - lo) / (hi - lo);
      double y1 = H - m - (H - 2.0 * m) * (ys[j + 1] - lo) / (hi - lo);
      int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
      for (int s = 0; s <= steps; ++s) {
        int x = static_cast<int>(std::lround(x0 + (x1 - x0) * s / steps));
        int y = static_cast<int>(std::lround(y0 + (y1 - y0) * s / steps));
        if (y >= 0 && y < H && x >= 0 && x < W)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
      }
    }
  }
  save_png(img, path);
}

// ------------------------------------------------------------- subcommands

struct DatasetOpts {
  int identities = 50, variations = 8, resolution = 64;
  uint64_t seed = 1;
  double heldout = 0.1;
  std::string out;
};

int cmd_dataset(const DatasetOpts& o) {
  Timer timer;
  fs::create_directories(o.out);
  DirLock lock(o.out);
  CorpusManifest m =
      generate_corpus(o.identities, o.variations, o.seed, o.resolution, o.out, o.heldout);
  RunManifest rm;
  rm.subcommand = "dataset";
  rm.seed = o.seed;
  rm.config = {{"identities", std::to_string(o.identities)},
               {"variations", std::to_string(o.variations)},
               {"resolution", std::to_string(o.resolution)},
               {"heldout_fraction", std::to_string(o.heldout)},
               {"out", o.out}};
  rm.outputs = {manifest_path_of(o.out)};
  rm.duration_seconds = timer.seconds();
  rm.save(o.out + "/run_manifest.json");
  std::cout << "wrote " << m.entries.size() << " images to " << o.out << "\n";
  return 0;
}

struct TrainOpts {
  std::string stage, data, cache = default_cache(), config_path;
  TrainConfig cfg;
};

// key=value config file; explicit command-line flags take precedence
void apply_train_config(TrainOpts& o, const CLI::App& tr) {
  auto kv = read_config(o.config_path);
  auto take = [&](const char* key, const char* flag, auto parse, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if (tr.count(flag) == 0) field = parse(it->second);
    kv.erase(it);
  };
  auto s2d = [](const std::string& s) { return std::stod(s); };
  auto s2i = [](const std::string& s) { return std::stoi(s); };
  auto s2u = [](const std::string& s) { return std::stoull(s); };
  take("iterations", "--iterations", s2i, o.cfg.iterations);
  take("batch_size", "--batch-size", s2i, o.cfg.batch_size);
  take("lr", "--lr", s2d, o.cfg.lr);
  take("seed", "--seed", s2u, o.cfg.seed);
  take("drop_lq_prob", "--drop-lq-prob", s2d, o.cfg.drop_lq_prob);
  take("drop_ref_prob", "--drop-ref-prob", s2d, o.cfg.drop_ref_prob);
  take("lambda_train", "--lambda-train", s2d, o.cfg.lambda_train);
  take("heavy_frac", "--heavy-frac", s2d, o.cfg.heavy_frac);
  if (!kv.empty()) throw ConfigError("unknown config key: " + kv.begin()->first);
}

int cmd_train(const TrainOpts& o) {
  Timer timer;
  fs::create_directories(o.cache);
  DirLock lock(o.cache);
  CorpusManifest corpus = load_manifest(manifest_path_of(o.data));

  TrainResult res;
  if (o.stage == "autoenc") {
    res = train_autoencoder(corpus, o.cfg.iterations, o.cfg.batch_size, o.cfg.lr,
                            o.cfg.seed, o.cache);
  } else if (o.stage == "idenc") {
    res = train_idencoder(corpus, o.cfg.iterations, o.cfg.batch_size, o.cfg.lr,
                          o.cfg.seed, o.cache);
  } else {
    TrainConfig cfg = o.cfg;
    cfg.stage = o.stage;
    res = train_stage(cfg, corpus, o.cache);
  }

  RunManifest rm;
  rm.subcommand = "train";
  rm.seed = o.cfg.seed;
  rm.config = o.cfg.to_kv();
  rm.config["stage"] = o.stage;
  rm.config["data"] = o.data;
  rm.inputs = {manifest_path_of(o.data)};
  rm.outputs = {res.ckpt_path};
  add_ckpt_hashes(rm, o.cache, {"autoenc", "idenc", "stage1", "stage1b", "stage2", "single"});
  rm.duration_seconds = timer.seconds();
  rm.save(o.cache + "/run_manifest.json");
  double last = res.losses.empty() ? 0.0 : res.losses.back();
  std::cout << "stage " << o.stage << " done, " << res.losses.size()
            << " iters, final loss " << last << " -> " << res.ckpt_path << "\n";
  return 0;
}

struct RestoreOpts {
  std::string lq, ref, out, id_scale = "auto", cache = default_cache();
  double cfg_weight = 7.5;
  int steps = 50;
  uint64_t seed = 0;
};

int cmd_restore(const RestoreOpts& o) {
  Timer timer;
  double lambda = -1.0;
  bool auto_lambda = o.id_scale == "auto";
  if (!auto_lambda) {
    try {
      lambda = std::stod(o.id_scale);
    } catch (const std::exception&) {
      throw ConfigError("--id-scale must be 'auto' or a number");
    }
    if (lambda < 0) throw ConfigError("--id-scale must be non-negative");
  }

  std::vector<std::string> lq_paths;
  if (fs::is_directory(o.lq)) {
    for (const auto& e : fs::directory_iterator(o.lq))
      if (e.path().extension() == ".png") lq_paths.push_back(e.path().string());
    std::sort(lq_paths.begin(), lq_paths.end());
  } else {
    lq_paths.push_back(o.lq);
  }
  if (lq_paths.empty()) throw IoError("no .png inputs under " + o.lq);

  Pipeline pipe = Pipeline::load(o.cache, auto_lambda ? "aidsa" : "fir");
  Image ref = load_png(o.ref);
  SamplerConfig sampler;
  sampler.cfg_weight = o.cfg_weight;
  sampler.ddim_steps = o.steps;

  fs::create_directories(o.out);
  DirLock lock(o.out);
  RunManifest rm;
  rm.subcommand = "restore";
  rm.seed = o.seed;
  rm.config = {{"id_scale", o.id_scale},
               {"cfg_weight", std::to_string(o.cfg_weight)},
               {"steps", std::to_string(o.steps)},
               {"ref", o.ref}};
  add_ckpt_hashes(rm, o.cache, {"autoenc", "idenc", "stage2"});

  for (size_t i = 0; i < lq_paths.size(); ++i) {
    Image lq = load_png(lq_paths[i]);
    double q = quality_score(lq);
    double l = auto_lambda ? id_scale(q) : lambda;
    SamplerConfig s = sampler;
    s.seed = derive_seed(o.seed, i);
    // λ=0 reduces to the base model: the identity branch is dropped entirely
    Image outimg = l == 0.0 ? pipe.restore(lq, nullptr, s, 0.0)
                            : pipe.restore(lq, &ref, s, l);
    std::string name = fs::path(lq_paths[i]).stem().string() + "_restored.png";
    save_png(outimg, o.out + "/" + name);
    rm.inputs.push_back(lq_paths[i]);
    rm.outputs.push_back(o.out + "/" + name);
    rm.config["quality_" + std::to_string(i)] = std::to_string(q);
    rm.config["lambda_" + std::to_string(i)] = std::to_string(l);
  }
  rm.duration_seconds = timer.seconds();
  rm.save(o.out + "/run_manifest.json");
  std::cout << "restored " << lq_paths.size() << " image(s) to " << o.out << "\n";
  return 0;
}

struct EvalOpts {
  std::string data, out, severity = "heavy", variant = "aidsa", cache = default_cache();
  int n = 0, steps = 50;
  double cfg_weight = 7.5;
  uint64_t seed = 7;
  bool heldout_only = false;
};

int cmd_eval(const EvalOpts& o) {
  Timer timer;
  CorpusManifest corpus = load_manifest(manifest_path_of(o.data));
  std::vector<EvalItem> items = eval_items_from_corpus(corpus, o.heldout_only, o.n);
  Pipeline pipe = Pipeline::load(o.cache, o.variant);
  SamplerConfig sampler;
  sampler.cfg_weight = o.cfg_weight;
  sampler.ddim_steps = o.steps;

  MetricReport rep = evaluate(pipe.restorer(sampler), pipe.idenc, items,
                              SeverityPreset::by_name(o.severity), o.seed);
  rep.provenance["variant"] = o.variant;
  fs::create_directories(o.out);
  DirLock lock(o.out);
  rep.save_csv(o.out + "/eval.csv");

  RunManifest rm;
  rm.subcommand = "eval";
  rm.seed = o.seed;
  rm.config = {{"severity", o.severity},
               {"variant", o.variant},
               {"n", std::to_string(items.size())},
               {"steps", std::to_string(o.steps)},
               {"cfg_weight", std::to_string(o.cfg_weight)}};
  rm.inputs = {manifest_path_of(o.data)};
  rm.outputs = {o.out + "/eval.csv"};
  add_ckpt_hashes(rm, o.cache, {"autoenc", "idenc", "stage1", "stage1b", "stage2", "single"});
  rm.duration_seconds = timer.seconds();
  rm.save(o.out + "/run_manifest.json");
  std::cout << "eval " << o.variant << "/" << o.severity << ": psnr " << rep.psnr_mean
            << " ssim " << rep.ssim_mean << " id_sim " << rep.id_sim_mean << " quality "
            << rep.quality_mean << "\n";
  return 0;
}

struct SweepOpts {
  std::string data, out, cache = default_cache();
  int n = 150, steps = 50;
  double lambda_step = 0.04, lambda_max = 2.0, cfg_weight = 7.5;
  uint64_t seed = 11;
  bool calibrate_fit = false;
};

int cmd_sweep(const SweepOpts& o) {
  Timer timer;
  CorpusManifest corpus = load_manifest(manifest_path_of(o.data));
  std::vector<EvalItem> eitems = eval_items_from_corpus(corpus, false, o.n);

  // mixed severities across the eval set
  std::vector<SweepItem> items;
  for (size_t i = 0; i < eitems.size(); ++i) {
    SweepItem it;
    it.gt = eitems[i].gt;
    it.ref = eitems[i].ref;
    Severity sev = i % 2 == 0 ? Severity::kLight : Severity::kHeavy;
    it.lq = degrade(it.gt, sample_recipe(SeverityPreset::get(sev), derive_seed(o.seed, i)));
    items.push_back(std::move(it));
  }

  std::vector<double> lambdas;
  for (double l = 0.0; l <= o.lambda_max + 1e-9; l += o.lambda_step)
    lambdas.push_back(std::round(l / o.lambda_step) * o.lambda_step);

  Pipeline pipe = Pipeline::load(o.cache, "fir");
  SamplerConfig sampler;
  sampler.cfg_weight = o.cfg_weight;
  sampler.ddim_steps = o.steps;
  SweepResult sr = sweep(pipe.sweep_restorer(sampler), pipe.idenc, items, lambdas,
                         default_bucket_edges(), o.seed);

  fs::create_directories(o.out);
  DirLock lock(o.out);
  sr.save_csv(o.out + "/sweep.csv");
  render_sweep_plot(sr, o.out + "/sweep.png");

  RunManifest rm;
  rm.subcommand = "sweep";
  rm.seed = o.seed;
  rm.config = {{"n", std::to_string(items.size())},
               {"lambda_step", std::to_string(o.lambda_step)},
               {"steps", std::to_string(o.steps)},
               {"cfg_weight", std::to_string(o.cfg_weight)}};
  rm.inputs = {manifest_path_of(o.data)};
  rm.outputs = {o.out + "/sweep.csv", o.out + "/sweep.png"};
  add_ckpt_hashes(rm, o.cache, {"autoenc", "idenc", "stage2"});

  if (o.calibrate_fit) {
    std::vector<double> ag, bg;
    for (double a = 0; a <= 20.0001; a += 0.5) ag.push_back(a);
    for (double b = 1; b <= 30.0001; b += 1.0) bg.push_back(b);
    AidsaConfig fit = calibrate(sr, ag, bg);
    fit.save(o.out + "/aidsa.cfg");
    rm.outputs.push_back(o.out + "/aidsa.cfg");
    std::cout << "calibrated alpha=" << fit.alpha << " beta=" << fit.beta << "\n";
  }
  rm.duration_seconds = timer.seconds();
  rm.save(o.out + "/run_manifest.json");
  std::cout << "sweep over " << items.size() << " images x " << lambdas.size()
            << " lambdas -> " << o.out << "/sweep.csv\n";
  return 0;
}

struct CalibrateOpts {
  std::string sweep_csv, out;
};

int cmd_calibrate(const CalibrateOpts& o) {
  SweepResult sr = SweepResult::load_csv(o.sweep_csv);
  std::vector<double> ag, bg;
  for (double a = 0; a <= 20.0001; a += 0.5) ag.push_back(a);
  for (double b = 1; b <= 30.0001; b += 1.0) bg.push_back(b);
  AidsaConfig fit = calibrate(sr, ag, bg);
  fit.save(o.out);
  std::cout << "alpha=" << fit.alpha << " beta=" << fit.beta << " -> " << o.out << "\n";
  return 0;
}

struct AblationOpts {
  std::string data, out, cache = default_cache();
  int n = 0, steps = 50;
  double cfg_weight = 7.5;
  uint64_t seed = 13;
  bool heldout_only = false;
};

int cmd_ablation(const AblationOpts& o) {
  Timer timer;
  CorpusManifest corpus = load_manifest(manifest_path_of(o.data));
  std::vector<EvalItem> items = eval_items_from_corpus(corpus, o.heldout_only, o.n);

  SamplerConfig sampler;
  sampler.cfg_weight = o.cfg_weight;
  sampler.ddim_steps = o.steps;

  std::vector<std::unique_ptr<Pipeline>> pipes;
  std::vector<std::pair<std::string, std::optional<Restorer>>> variants;
  IdEncoder idenc = load_idencoder(ckpt_path(o.cache, "idenc"));
  for (const char* v : {"base", "id", "fir", "aidsa", "single"}) {
    if (fs::exists(ckpt_path(o.cache, Pipeline::ckpt_name(v)))) {
      pipes.push_back(std::make_unique<Pipeline>(Pipeline::load(o.cache, v)));
      variants.emplace_back(v, pipes.back()->restorer(sampler));
    } else {
      variants.emplace_back(v, std::nullopt);
    }
  }

  std::vector<AblationRow> rows = run_ablation(variants, idenc, items, o.seed);
  fs::create_directories(o.out);
  DirLock lock(o.out);
  save_ablation_csv(rows, o.out + "/ablation.csv");

  RunManifest rm;
  rm.subcommand = "ablation";
  rm.seed = o.seed;
  rm.config = {{"n", std::to_string(items.size())},
               {"steps", std::to_string(o.steps)},
               {"cfg_weight", std::to_string(o.cfg_weight)}};
  rm.inputs = {manifest_path_of(o.data)};
  rm.outputs = {o.out + "/ablation.csv"};
  add_ckpt_hashes(rm, o.cache, {"autoenc", "idenc", "stage1", "stage1b", "stage2", "single"});
  rm.duration_seconds = timer.seconds();
  rm.save(o.out + "/run_manifest.json");
  std::cout << "ablation table (" << rows.size() << " rows) -> " << o.out
            << "/ablation.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reference-guided, identity-preserving face restoration"};
  app.require_subcommand(1);

  DatasetOpts dso;
  CLI::App* ds = app.add_subcommand("dataset", "generate a toy-face corpus");
  ds->add_option("--identities", dso.identities);
  ds->add_option("--variations", dso.variations);
  ds->add_option("--resolution", dso.resolution);
  ds->add_option("--seed", dso.seed);
  ds->add_option("--heldout-fraction", dso.heldout);
  ds->add_option("--out", dso.out)->required();

  TrainOpts tro;
  CLI::App* tr = app.add_subcommand("train", "train one model / stage");
  tr->add_option("--config", tro.config_path);
  tr->add_option("--stage", tro.stage)
      ->required()
      ->check(CLI::IsMember({"autoenc", "idenc", "1", "1b", "2", "single"}));
  tr->add_option("--data", tro.data)->required();
  tr->add_option("--cache", tro.cache);
  tr->add_option("--iterations", tro.cfg.iterations);
  tr->add_option("--batch-size", tro.cfg.batch_size);
  tr->add_option("--lr", tro.cfg.lr);
  tr->add_option("--seed", tro.cfg.seed);
  tr->add_option("--drop-lq-prob", tro.cfg.drop_lq_prob);
  tr->add_option("--drop-ref-prob", tro.cfg.drop_ref_prob);
  tr->add_option("--lambda-train", tro.cfg.lambda_train);
  tr->add_option("--heavy-frac", tro.cfg.heavy_frac);

  RestoreOpts ro;
  CLI::App* rs = app.add_subcommand("restore", "restore LQ image(s) with a reference");
  rs->add_option("--lq", ro.lq)->required();
  rs->add_option("--ref", ro.ref)->required();
  rs->add_option("--out", ro.out)->required();
  rs->add_option("--id-scale", ro.id_scale);
  rs->add_option("--cfg", ro.cfg_weight);
  rs->add_option("--steps", ro.steps);
  rs->add_option("--seed", ro.seed);
  rs->add_option("--cache", ro.cache);

  EvalOpts eo;
  CLI::App* ev = app.add_subcommand("eval", "metric report on a corpus");
  ev->add_option("--data", eo.data)->required();
  ev->add_option("--out", eo.out)->required();
  ev->add_option("--severity", eo.severity)->check(CLI::IsMember({"light", "heavy"}));
  ev->add_option("--variant", eo.variant)
      ->check(CLI::IsMember({"base", "id", "fir", "aidsa", "single"}));
  ev->add_option("--n", eo.n);
  ev->add_option("--steps", eo.steps);
  ev->add_option("--cfg", eo.cfg_weight);
  ev->add_option("--seed", eo.seed);
  ev->add_option("--cache", eo.cache);
  ev->add_flag("--heldout-only", eo.heldout_only);

  SweepOpts so;
  CLI::App* sw = app.add_subcommand("sweep", "ID-scale sweep over quality buckets");
  sw->add_option("--data", so.data)->required();
  sw->add_option("--out", so.out)->required();
  sw->add_option("--n", so.n);
  sw->add_option("--lambda-step", so.lambda_step);
  sw->add_option("--lambda-max", so.lambda_max);
  sw->add_option("--steps", so.steps);
  sw->add_option("--cfg", so.cfg_weight);
  sw->add_option("--seed", so.seed);
  sw->add_option("--cache", so.cache);
  sw->add_flag("--calibrate", so.calibrate_fit);

  CalibrateOpts co;
  CLI::App* ca = app.add_subcommand("calibrate", "fit alpha/beta from a sweep CSV");
  ca->add_option("--sweep", co.sweep_csv)->required();
  ca->add_option("--out", co.out)->required();

  AblationOpts ao;
  CLI::App* ab = app.add_subcommand("ablation", "variant x severity metric table");
  ab->add_option("--data", ao.data)->required();
  ab->add_option("--out", ao.out)->required();
  ab->add_option("--n", ao.n);
  ab->add_option("--steps", ao.steps);
  ab->add_option("--cfg", ao.cfg_weight);
  ab->add_option("--seed", ao.seed);
  ab->add_option("--cache", ao.cache);
  ab->add_flag("--heldout-only", ao.heldout_only);

  try {
    app.parse(argc, argv);
    if (ds->parsed()) return cmd_dataset(dso);
    if (tr->parsed()) {
      if (!tro.config_path.empty()) apply_train_config(tro, *tr);
      return cmd_train(tro);
    }
    if (rs->parsed()) return cmd_restore(ro);
    if (ev->parsed()) return cmd_eval(eo);
    if (sw->parsed()) return cmd_sweep(so);
    if (ca->parsed()) return cmd_calibrate(co);
    if (ab->parsed()) return cmd_ablation(ao);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const StateError& e) {
    std::cerr << "missing dependency: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
