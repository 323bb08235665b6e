// Acceptance harness: one pass/fail line per criterion. Trained-pipeline
// criteria build their checkpoints under --workdir on first use and reuse
// them afterwards.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "gradcheck.h"
#include "restorerid/pipeline.h"

using namespace rid;
namespace fs = std::filesystem;

namespace {

// desk-scale training recipe (fixed; reruns reuse existing checkpoints)
constexpr uint64_t kSeed = 3;
constexpr int kAeIters = 4000;
constexpr double kAeLr = 2e-3;
constexpr int kIdIters = 2000;
constexpr double kIdLr = 1e-3;
constexpr int kStage1Iters = 3000;
constexpr int kStage1bIters = 1500;
constexpr int kStage2Iters = 1500;
constexpr int kSingleIters = 3000;
constexpr double kStageLr = 1e-4;
constexpr int kEvalN = 50;
constexpr int kEvalSteps = 20;
constexpr double kCfgWeight = 7.5;

struct Harness {
  bool all_ok = true;
  void report(int n, bool ok, const std::string& msg) {
    std::cout << "criterion " << n << (ok ? " PASS: " : " FAIL: ") << msg << std::endl;
    if (!ok) all_ok = false;
  }
};

UNetConfig micro_config() {
  UNetConfig cfg;
  cfg.base_width = 8;
  cfg.d_ctx = 16;
  cfg.n_heads = 2;
  cfg.time_embed_dim = 32;
  return cfg;
}

double max_rel_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = std::abs(static_cast<double>(a[i]) - b[i]);
    m = std::max(m, d / std::max(1e-6, std::abs(static_cast<double>(a[i]))));
  }
  return m;
}

Image toy_face(int id, uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<uint64_t>(id)));
  return render_face(sample_identity(id, rng), sample_variation(rng), 64).image;
}

CorpusManifest ensure_corpus(const std::string& dir, int ids, int vars, uint64_t seed,
                             double heldout) {
  if (fs::exists(manifest_path_of(dir))) return load_manifest(manifest_path_of(dir));
  fs::create_directories(dir);
  return generate_corpus(ids, vars, seed, 64, dir, heldout);
}

void ensure_training(const CorpusManifest& corpus, const std::string& cache) {
  fs::create_directories(cache);
  auto missing = [&](const char* name) { return !fs::exists(ckpt_path(cache, name)); };
  if (missing("autoenc")) {
    std::cout << "[setup] training autoencoder (" << kAeIters << " iters)" << std::endl;
    train_autoencoder(corpus, kAeIters, 16, kAeLr, kSeed, cache);
  }
  if (missing("idenc")) {
    std::cout << "[setup] training id encoder (" << kIdIters << " iters)" << std::endl;
    train_idencoder(corpus, kIdIters, 16, kIdLr, kSeed, cache);
  }
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.lr = kStageLr;
  cfg.seed = kSeed;
  auto stage = [&](const char* name, const char* st, int iters) {
    if (!missing(name)) return;
    std::cout << "[setup] training " << name << " (" << iters << " iters)" << std::endl;
    cfg.stage = st;
    cfg.iterations = iters;
    train_stage(cfg, corpus, cache);
  };
  stage("stage1", "1", kStage1Iters);
  stage("stage1b", "1b", kStage1bIters);
  stage("stage2", "2", kStage2Iters);
  stage("single", "single", kSingleIters);
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(RID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return rc < 0 ? rc : (rc >> 8) & 0xff;
}

}  // namespace

int main(int argc, char** argv) {
  std::string workdir;
  for (int i = 1; i + 1 < argc; i += 2)
    if (std::string(argv[i]) == "--workdir") workdir = argv[i + 1];
  if (workdir.empty()) {
    std::cerr << "usage: acceptance --workdir DIR" << std::endl;
    return 2;
  }
  fs::create_directories(workdir);
  const std::string cache = workdir + "/cache";

  Harness h;

  // ---- fast, training-free criteria -------------------------------------

  {  // 2: FIR adapter is the bit-exact identity at initialization
    FIRAdapterT<float> fir;
    Rng rng(7);
    fir.init("fir", 16, 16, 2, rng);
    Rng drng(8);
    bool ok = true;
    for (int i = 0; i < 100 && ok; ++i) {
      Tensor x = Tensor::randn({1, 16, 5, 5}, drng, 2.0f);
      Tensor flq = Tensor::randn({1, 16, 5, 5}, drng);
      Tensor tok = Tensor::randn({1, 4, 16}, drng);
      Graph<float> g;
      ok = fir.fwd(g, constant(g, x), constant(g, flq), constant(g, tok)).val().data == x.data;
    }
    h.report(2, ok, "FIR adapter identity-at-init bit-exact on 100 random triples");
  }

  {  // 3: gradient oracle through SFT, decoupled attention and FIR
    DenoiserT<double> den;
    Rng rng(13);
    den.init(micro_config(), rng);
    DiffusionSchedule sched = DiffusionSchedule::linear();
    Rng drng(14);
    TensorD z0 = TensorD::randn({1, 4, 16, 16}, drng, 0.5);
    TensorD lq = TensorD::randn({1, 4, 16, 16}, drng, 0.5);
    TensorD emb = TensorD::randn({1, kIdEmbedDim}, drng, 0.5);
    TensorD eps = TensorD::randn({1, 4, 16, 16}, drng);
    std::vector<int> t{350};
    auto make_loss = [&](bool with_grad) {
      Graph<double> g;
      Var<double> loss = diffusion_loss(g, den, sched, z0, t, &lq, &emb, eps, 0.75);
      if (with_grad) g.backward(loss.id);
      return loss.val()[0];
    };
    ParamList<double> probe;
    den.enc0.sft.collect(probe);
    den.attn_enc1.collect_id(probe);
    probe.push_back(&den.attn_enc1.null_ctx);
    probe.push_back(&den.attn_enc1.kt.w);
    probe.push_back(&den.attn_enc1.cq.w);
    den.fir_dec0.collect(probe);
    probe.push_back(&den.projector.proj.w);
    probe.push_back(&den.conv_in.w);
    gc::Result r = gc::check(probe, make_loss, 1e-5, 4);
    h.report(3, r.max_rel_err < 1e-4 && r.checked > 80,
             "diffusion_loss gradients vs central differences: max rel err " +
                 std::to_string(r.max_rel_err) + " over " + std::to_string(r.checked) +
                 " entries");
  }

  {  // 4: ID-scale curve exactness and defaults
    AidsaConfig cfg;
    bool ok = cfg.alpha == 9.5 && cfg.beta == 10.0;
    for (double q : {0.0, 9.5, 20.0, 50.0, 100.0}) {
      double expect = std::min(2.0, std::max(0.0, std::exp((9.5 - q) / 10.0)));
      if (std::abs(id_scale(q, cfg) - expect) > 1e-12) ok = false;
    }
    h.report(4, ok, "id_scale matches clamp(exp((9.5-q)/10)) to 1e-12, defaults alpha=9.5 beta=10");
  }

  {  // 5: degradation severity ordering on 200 toy images
    int q_ordered = 0;
    double psnr_light = 0, psnr_heavy = 0;
    const int n = 200;
    for (int i = 0; i < n; ++i) {
      Image face = toy_face(i, 77);
      Image light = degrade(face, sample_recipe(SeverityPreset::light(),
                                                derive_seed(300, static_cast<uint64_t>(i))));
      Image heavy = degrade(face, sample_recipe(SeverityPreset::heavy(),
                                                derive_seed(400, static_cast<uint64_t>(i))));
      if (quality_score(heavy) < quality_score(light)) ++q_ordered;
      psnr_light += psnr(light, face);
      psnr_heavy += psnr(heavy, face);
    }
    bool ok = q_ordered >= static_cast<int>(0.95 * n) && psnr_heavy / n < psnr_light / n;
    h.report(5, ok,
             "heavy < light quality on " + std::to_string(q_ordered) + "/200 images, "
             "mean psnr heavy " + std::to_string(psnr_heavy / n) + " < light " +
                 std::to_string(psnr_light / n));
  }

  {  // 10a/10c oracles that need no training: SSIM reference values
    const double golden[10] = {
        0.998627882428, 0.994697483268, 0.987984909693, 0.978600780068,
        0.968365085075, 0.956745649573, 0.941581072965, 0.922771562220,
        0.902791180379, 0.882974625993,
    };
    double worst = 0;
    for (int p = 0; p < 10; ++p) {
      Image a(32, 32), b(32, 32);
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          for (int c = 0; c < 3; ++c) {
            double av = 0.5 + 0.45 * std::sin(0.37 * (x + 1) * (c + 1) + 0.23 * (y + 1) + p);
            double bv = av + 0.02 * (p + 1) *
                                 std::cos(0.29 * (x + 1) + 0.31 * (y + 1) * (c + 1) + 2.0 * p);
            a.at(y, x, c) = static_cast<float>(av);
            b.at(y, x, c) = static_cast<float>(std::min(1.0, std::max(0.0, bv)));
          }
      worst = std::max(worst, std::abs(ssim(a, b) - golden[p]));
    }
    // folded into criterion 10 below
    if (worst > 1e-6) {
      h.report(10, false, "ssim deviates from reference values by " + std::to_string(worst));
      return 1;
    }
  }

  // ---- trained-pipeline criteria -----------------------------------------

  std::cout << "[setup] preparing corpus and checkpoints under " << workdir << std::endl;
  CorpusManifest corpus = ensure_corpus(workdir + "/data", 50, 8, kSeed, 0.1);
  ensure_training(corpus, cache);
  CorpusManifest eval_corpus = ensure_corpus(workdir + "/evaldata", 55, 2, 101, 0.0);
  std::vector<EvalItem> items = eval_items_from_corpus(eval_corpus, false, kEvalN);

  Pipeline base = Pipeline::load(cache, "base");
  Pipeline idp = Pipeline::load(cache, "id");
  Pipeline fir = Pipeline::load(cache, "fir");
  Pipeline single = Pipeline::load(cache, "single");

  {  // 1: lambda=0 with FIR at init reduces the full model to the base model
    // stage1b leaves the FIR adapters at their (identity) initialization
    Rng drng(51);
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
      Tensor z = Tensor::randn({1, 4, 16, 16}, drng);
      Tensor lq = Tensor::randn({1, 4, 16, 16}, drng);
      Tensor emb = Tensor::randn({1, kIdEmbedDim}, drng);
      std::vector<double> t{static_cast<double>(50 * (i + 1) % 1000)};

      Graph<float> gf;
      auto pyr_f = idp.den.lq_extract(gf, constant(gf, lq), t);
      Var<float> tokens = project_tokens(gf, idp.den.projector, emb);
      Tensor full = idp.den.fwd(gf, constant(gf, z), t, &pyr_f, tokens, 0.0).val();

      Graph<float> gb;
      auto pyr_b = base.den.lq_extract(gb, constant(gb, lq), t);
      Tensor ref = base.den.fwd(gb, constant(gb, z), t, &pyr_b, {}, 0.0).val();
      worst = std::max(worst, max_rel_diff(ref, full));
    }
    h.report(1, worst < 1e-5,
             "lambda=0 + FIR-at-init equals base prediction, max rel diff " +
                 std::to_string(worst) + " over 20 inputs");
  }

  {  // 6: restoration determinism and cfg_weight=1 == conditional-only DDIM
    std::string lq_png = eval_corpus.dir + "/" + eval_corpus.entries[0].path;
    std::string ref_png = eval_corpus.dir + "/" + eval_corpus.entries[1].path;
    std::string r1 = workdir + "/det1", r2 = workdir + "/det2";
    fs::remove_all(r1);
    fs::remove_all(r2);
    std::string args = " --lq " + lq_png + " --ref " + ref_png + " --cache " + cache +
                       " --steps 10 --seed 21";
    bool det_ok = run_cli("restore --out " + r1 + args) == 0 &&
                  run_cli("restore --out " + r2 + args) == 0;
    if (det_ok) {
      std::string name = fs::path(lq_png).stem().string() + "_restored.png";
      det_ok = file_hash(r1 + "/" + name) == file_hash(r2 + "/" + name);
    }

    // independent conditional-only DDIM recurrence
    Image lq_img = load_png(lq_png);
    Image ref_img = load_png(ref_png);
    Tensor lq_lat = fir.ae.encode_image(lq_img);
    IdentityEmbedding e = embed(fir.idenc, ref_img);
    Tensor emb({1, kIdEmbedDim});
    std::copy(e.begin(), e.end(), emb.ptr());

    SamplerConfig sc;
    sc.ddim_steps = 3;
    sc.cfg_weight = 1.0;
    sc.seed = 33;
    Tensor got = ddim_sample_latent(fir.den, fir.sched, &lq_lat, &e, sc, 0.75);

    Rng zrng(sc.seed);
    Tensor z = Tensor::randn({1, 4, 16, 16}, zrng);
    std::vector<int> ts{0, 333, 666};
    for (int i = 2; i >= 0; --i) {
      const int t = ts[static_cast<size_t>(i)];
      Graph<float> g;
      std::vector<double> td{static_cast<double>(t)};
      auto pyr = fir.den.lq_extract(g, constant(g, lq_lat), td);
      Var<float> tok = project_tokens(g, fir.den.projector, emb);
      Tensor eps = fir.den.fwd(g, constant(g, z), td, &pyr, tok, 0.75).val();
      const double ab_t = fir.sched.alpha_bar[static_cast<size_t>(t)];
      const double ab_s = i > 0 ? fir.sched.alpha_bar[static_cast<size_t>(ts[static_cast<size_t>(i - 1)])] : 1.0;
      for (int64_t k = 0; k < z.numel(); ++k) {
        double x0 = (z[k] - std::sqrt(1.0 - ab_t) * eps[k]) / std::sqrt(ab_t);
        z[k] = static_cast<float>(std::sqrt(ab_s) * x0 + std::sqrt(1.0 - ab_s) * eps[k]);
      }
    }
    double sampler_diff = max_rel_diff(got, z);
    h.report(6, det_ok && sampler_diff < 1e-4,
             std::string("restore bit-reproducible: ") + (det_ok ? "yes" : "NO") +
                 "; cfg_weight=1 vs conditional-only DDIM max rel diff " +
                 std::to_string(sampler_diff));
  }

  SamplerConfig sampler;
  sampler.ddim_steps = kEvalSteps;
  sampler.cfg_weight = kCfgWeight;
  IdEncoder idenc = load_idencoder(ckpt_path(cache, "idenc"));

  std::cout << "[setup] evaluating variants on " << items.size()
            << " heavy-degraded images" << std::endl;
  MetricReport rep_base = evaluate(base.restorer(sampler), idenc, items,
                                   SeverityPreset::heavy(), 7);
  MetricReport rep_id = evaluate(idp.restorer(sampler), idenc, items,
                                 SeverityPreset::heavy(), 7);
  MetricReport rep_fir = evaluate(fir.restorer(sampler), idenc, items,
                                  SeverityPreset::heavy(), 7);
  MetricReport rep_single = evaluate(single.restorer(sampler), idenc, items,
                                     SeverityPreset::heavy(), 7);

  {  // 7: directional ablation with paired significance
    double p = paired_ttest_p(rep_id.id_sim_v, rep_base.id_sim_v);
    bool id_gain = rep_id.id_sim_mean > rep_base.id_sim_mean && p < 0.05;
    bool quality_kept = rep_fir.quality_mean >= rep_id.quality_mean;
    h.report(7, id_gain && quality_kept,
             "id_sim base " + std::to_string(rep_base.id_sim_mean) + " -> +id " +
                 std::to_string(rep_id.id_sim_mean) + " (p=" + std::to_string(p) +
                 "), quality +id " + std::to_string(rep_id.quality_mean) + " -> +id+fir " +
                 std::to_string(rep_fir.quality_mean));
  }

  {  // 9: two-stage vs single-stage comparison table (direction reported)
    std::vector<AblationRow> rows;
    AblationRow two, one;
    two.variant = "two_stage";
    two.severity = "heavy";
    two.present = true;
    two.psnr = rep_fir.psnr_mean;
    two.ssim = rep_fir.ssim_mean;
    two.id_sim = rep_fir.id_sim_mean;
    two.quality = rep_fir.quality_mean;
    one = two;
    one.variant = "single_stage";
    one.psnr = rep_single.psnr_mean;
    one.ssim = rep_single.ssim_mean;
    one.id_sim = rep_single.id_sim_mean;
    one.quality = rep_single.quality_mean;
    rows = {two, one};
    save_ablation_csv(rows, workdir + "/two_stage_vs_single.csv");
    bool table_ok = fs::exists(workdir + "/two_stage_vs_single.csv");
    std::string direction = rep_fir.id_sim_mean >= rep_single.id_sim_mean
                                ? "two-stage >= single-stage"
                                : "two-stage < single-stage (reported)";
    h.report(9, table_ok,
             "heavy id_sim two-stage " + std::to_string(rep_fir.id_sim_mean) +
                 " vs single-stage " + std::to_string(rep_single.id_sim_mean) + "; " +
                 direction + "; table written");
  }

  {  // 8: sweep shape across quality buckets
    std::vector<SweepItem> sitems;
    for (size_t i = 0; i < items.size() && sitems.size() < 24; ++i) {
      SweepItem it;
      it.gt = items[i].gt;
      it.ref = items[i].ref;
      Severity sev = i % 2 == 0 ? Severity::kLight : Severity::kHeavy;
      it.lq = degrade(it.gt, sample_recipe(SeverityPreset::get(sev), derive_seed(11, i)));
      sitems.push_back(std::move(it));
    }
    std::vector<double> lambdas;
    for (int i = 0; i <= 8; ++i) lambdas.push_back(i * 0.25);
    std::cout << "[setup] sweeping " << sitems.size() << " images x " << lambdas.size()
              << " lambdas" << std::endl;
    SweepResult sr = sweep(fir.sweep_restorer(sampler), idenc, sitems, lambdas,
                           default_bucket_edges(), 11);
    sr.save_csv(workdir + "/sweep.csv");
    bool ok = sr.buckets.size() >= 2;
    double lam_low = 0, lam_high = 0;
    if (ok) {
      lam_low = sr.argmax_lambda(0);                     // lowest-quality bucket
      lam_high = sr.argmax_lambda(sr.buckets.size() - 1);  // highest-quality bucket
      ok = lam_low >= lam_high;
    }
    h.report(8, ok,
             "argmax lambda: lowest-quality bucket " + std::to_string(lam_low) +
                 " >= highest-quality bucket " + std::to_string(lam_high));
  }

  {  // 10: component oracles on held-out identities
    Autoencoder ae = load_autoencoder(ckpt_path(cache, "autoenc"));
    std::vector<int> held = corpus.identity_labels(true);
    double psnr_acc = 0;
    int psnr_n = 0;
    std::vector<std::vector<IdentityEmbedding>> embs;
    for (int id : held) {
      std::vector<IdentityEmbedding> per;
      for (const CorpusEntry* e : corpus.entries_of(id)) {
        Image img = load_png(corpus.dir + "/" + e->path);
        psnr_acc += psnr(ae.decode_latent(ae.encode_image(img)), img);
        ++psnr_n;
        per.push_back(embed(idenc, img));
      }
      embs.push_back(std::move(per));
    }
    double same = 0, cross = 0;
    int n_same = 0, n_cross = 0;
    for (size_t a = 0; a < embs.size(); ++a)
      for (size_t i = 0; i < embs[a].size(); ++i) {
        for (size_t j = i + 1; j < embs[a].size(); ++j) {
          same += id_similarity(embs[a][i], embs[a][j]);
          ++n_same;
        }
        for (size_t b = a + 1; b < embs.size(); ++b)
          for (size_t j = 0; j < embs[b].size(); ++j) {
            cross += id_similarity(embs[a][i], embs[b][j]);
            ++n_cross;
          }
      }
    double separation = same / std::max(1, n_same) - cross / std::max(1, n_cross);
    double ae_psnr = psnr_acc / std::max(1, psnr_n);
    bool ok = separation >= 0.3 && ae_psnr >= 28.0;
    h.report(10, ok,
             "held-out id separation " + std::to_string(separation) +
                 " (>=0.3), autoencoder held-out psnr " + std::to_string(ae_psnr) +
                 " dB (>=28), ssim reference match within 1e-6");
  }

  std::cout << (h.all_ok ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << std::endl;
  return h.all_ok ? 0 : 1;
}
