#include "restorerid/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "restorerid/errors.h"

namespace rid {

void TrainConfig::validate() const {
  if (stage != "1" && stage != "1b" && stage != "2" && stage != "single")
    throw ConfigError("train: stage must be 1|1b|2|single");
  if (iterations < 1) throw ValidationError("train: iterations must be positive");
  if (batch_size < 1) throw ValidationError("train: batch_size must be positive");
  if (lr <= 0) throw ValidationError("train: lr must be positive");
  for (double p : {drop_lq_prob, drop_ref_prob, heavy_frac})
    if (p < 0 || p > 1) throw ValidationError("train: probability outside [0,1]");
  if (lambda_train < 0) throw ValidationError("train: lambda_train must be >= 0");
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  return {{"stage", stage},
          {"iterations", std::to_string(iterations)},
          {"batch_size", std::to_string(batch_size)},
          {"lr", std::to_string(lr)},
          {"drop_lq_prob", std::to_string(drop_lq_prob)},
          {"drop_ref_prob", std::to_string(drop_ref_prob)},
          {"lambda_train", std::to_string(lambda_train)},
          {"seed", std::to_string(seed)},
          {"heavy_frac", std::to_string(heavy_frac)}};
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  auto get = [&](const char* k, auto parse, auto& field) {
    auto it = kv.find(k);
    if (it != kv.end()) field = parse(it->second);
  };
  auto s2d = [](const std::string& s) { return std::stod(s); };
  auto s2i = [](const std::string& s) { return std::stoi(s); };
  auto s2u = [](const std::string& s) { return std::stoull(s); };
  auto id = [](const std::string& s) { return s; };
  get("stage", id, c.stage);
  get("iterations", s2i, c.iterations);
  get("batch_size", s2i, c.batch_size);
  get("lr", s2d, c.lr);
  get("drop_lq_prob", s2d, c.drop_lq_prob);
  get("drop_ref_prob", s2d, c.drop_ref_prob);
  get("lambda_train", s2d, c.lambda_train);
  get("seed", s2u, c.seed);
  get("heavy_frac", s2d, c.heavy_frac);
  c.validate();
  return c;
}

std::string ckpt_path(const std::string& cache_dir, const std::string& name) {
  return cache_dir + "/" + name + ".ckpt";
}

namespace {

Image load_entry(const CorpusManifest& corpus, const CorpusEntry& e) {
  return load_png(corpus.dir + "/" + e.path);
}

// batch of image tensors -> (N,3,H,W)
Tensor stack_images(const std::vector<Image>& imgs) {
  Tensor first = image_to_tensor(imgs.at(0));
  std::vector<int> shape = first.shape;
  shape[0] = static_cast<int>(imgs.size());
  Tensor out(shape);
  const int64_t per = first.numel();
  for (size_t i = 0; i < imgs.size(); ++i) {
    Tensor t = image_to_tensor(imgs[i]);
    std::copy(t.data.begin(), t.data.end(), out.ptr() + static_cast<int64_t>(i) * per);
  }
  return out;
}

std::vector<const CorpusEntry*> train_entries(const CorpusManifest& corpus) {
  std::vector<const CorpusEntry*> out;
  for (const auto& e : corpus.entries)
    if (!e.heldout) out.push_back(&e);
  if (out.empty()) throw ValidationError("corpus has no training entries");
  return out;
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "iter,loss\n";
  for (size_t i = 0; i < losses.size(); ++i) out << i << "," << losses[i] << "\n";
}

void write_model_card(const std::string& path, const std::string& kind,
                      const std::map<std::string, std::string>& fields) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "model: " << kind << "\n";
  for (const auto& [k, v] : fields) out << k << ": " << v << "\n";
}

std::string require_ckpt(const std::string& cache_dir, const std::string& name) {
  std::string p = ckpt_path(cache_dir, name);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StateError("missing prerequisite checkpoint: " + p);
  return p;
}

}  // namespace

TrainingPair make_training_pair(const CorpusManifest& corpus, int id_label,
                                uint64_t seed, Severity severity) {
  std::vector<const CorpusEntry*> vars = corpus.entries_of(id_label);
  if (vars.size() < 2)
    throw ValidationError("make_training_pair: identity needs >= 2 variations");
  Rng rng(derive_seed(seed, static_cast<uint64_t>(id_label)));
  const int hq_i = rng.uniform_int(static_cast<int>(vars.size()));
  int ref_i = rng.uniform_int(static_cast<int>(vars.size()) - 1);
  if (ref_i >= hq_i) ++ref_i;
  TrainingPair p;
  p.hq = load_entry(corpus, *vars[static_cast<size_t>(hq_i)]);
  p.ref = load_entry(corpus, *vars[static_cast<size_t>(ref_i)]);
  p.hq_path = vars[static_cast<size_t>(hq_i)]->path;
  p.ref_path = vars[static_cast<size_t>(ref_i)]->path;
  DegradationRecipe recipe =
      sample_recipe(SeverityPreset::get(severity), derive_seed(seed, 0x5EED));
  p.lq = degrade(p.hq, recipe);
  return p;
}

TrainResult train_autoencoder(const CorpusManifest& corpus, int iterations,
                              int batch_size, double lr, uint64_t seed,
                              const std::string& cache_dir) {
  Autoencoder ae;
  Rng init_rng(derive_seed(seed, 0xAE));
  ae.init(init_rng);
  ParamList<float> params = ae.params();
  AdamW<float> opt;
  opt.lr = lr;

  auto entries = train_entries(corpus);
  std::vector<double> losses;
  for (int it = 0; it < iterations; ++it) {
    Rng rng(derive_seed(seed, 1000 + static_cast<uint64_t>(it)));
    std::vector<Image> batch;
    for (int b = 0; b < batch_size; ++b)
      batch.push_back(load_entry(corpus, *entries[static_cast<size_t>(
                                              rng.uniform_int(static_cast<int>(entries.size())))]));
    Tensor x = stack_images(batch);
    zero_grads(params);
    Graph<float> g;
    Var<float> z = ae.encode(g, constant(g, x));
    Var<float> recon = ae.decode(g, z);
    // pixel L2 plus a small bottleneck penalty to keep the latent conditioned
    Var<float> loss = add_scaled(mse(recon, x), mean_square(z), 1e-4);
    g.backward(loss.id);
    opt.step(params);
    losses.push_back(static_cast<double>(loss.val()[0]));
  }

  // fit the latent scale so scaled latents are roughly unit variance
  Rng srng(derive_seed(seed, 0x5CA1E));
  double acc = 0.0;
  int64_t n = 0;
  for (int i = 0; i < 64; ++i) {
    const CorpusEntry* e =
        entries[static_cast<size_t>(srng.uniform_int(static_cast<int>(entries.size())))];
    Graph<float> g;
    Tensor z = ae.encode(g, constant(g, image_to_tensor(load_entry(corpus, *e)))).val();
    for (float v : z.data) acc += static_cast<double>(v) * v;
    n += z.numel();
  }
  ae.latent_scale = 1.0 / std::max(1e-6, std::sqrt(acc / static_cast<double>(n)));

  Checkpoint ck;
  ck.kind = "autoenc";
  ck.meta["latent_scale"] = std::to_string(ae.latent_scale);
  ck.meta["base"] = std::to_string(ae.base);
  ck.meta["latent_channels"] = std::to_string(ae.latent_channels);
  ck.meta["seed"] = std::to_string(seed);
  ck.put_params(params);
  TrainResult res;
  res.ckpt_path = ckpt_path(cache_dir, "autoenc");
  ck.save(res.ckpt_path);
  write_loss_csv(cache_dir + "/autoenc_loss.csv", losses);
  write_model_card(cache_dir + "/autoenc_card.txt", "autoenc", ck.meta);
  res.losses = std::move(losses);
  return res;
}

TrainResult train_idencoder(const CorpusManifest& corpus, int iterations,
                            int batch_size, double lr, uint64_t seed,
                            const std::string& cache_dir) {
  std::vector<int> labels = corpus.identity_labels(false);
  if (labels.size() < 2)
    throw ValidationError("train_idencoder: need at least 2 identities");
  std::sort(labels.begin(), labels.end());
  std::unordered_map<int, int> cls;
  for (size_t i = 0; i < labels.size(); ++i) cls[labels[i]] = static_cast<int>(i);

  IdEncoder enc;
  Rng init_rng(derive_seed(seed, 0x1D));
  enc.init(static_cast<int>(labels.size()), init_rng);
  ParamList<float> params = enc.params();
  AdamW<float> opt;
  opt.lr = lr;

  auto entries = train_entries(corpus);
  std::vector<double> losses;
  for (int it = 0; it < iterations; ++it) {
    Rng rng(derive_seed(seed, 2000 + static_cast<uint64_t>(it)));
    std::vector<Image> batch;
    std::vector<int> y;
    for (int b = 0; b < batch_size; ++b) {
      const CorpusEntry* e =
          entries[static_cast<size_t>(rng.uniform_int(static_cast<int>(entries.size())))];
      Image img = load_entry(corpus, *e);
      // half the samples degraded so embeddings survive restoration artifacts
      if (rng.uniform(0, 1) < 0.5) {
        Severity sev = rng.uniform(0, 1) < 0.5 ? Severity::kLight : Severity::kHeavy;
        img = degrade(img, sample_recipe(SeverityPreset::get(sev), rng.next_seed()));
      }
      batch.push_back(std::move(img));
      y.push_back(cls.at(e->id_label));
    }
    zero_grads(params);
    Graph<float> g;
    Var<float> loss = softmax_cross_entropy(enc.logits(g, constant(g, stack_images(batch))), y);
    g.backward(loss.id);
    opt.step(params);
    losses.push_back(static_cast<double>(loss.val()[0]));
  }

  Checkpoint ck;
  ck.kind = "idenc";
  ck.meta["n_classes"] = std::to_string(enc.n_classes);
  ck.meta["seed"] = std::to_string(seed);
  ck.put_params(params);
  TrainResult res;
  res.ckpt_path = ckpt_path(cache_dir, "idenc");
  ck.save(res.ckpt_path);
  write_loss_csv(cache_dir + "/idenc_loss.csv", losses);
  write_model_card(cache_dir + "/idenc_card.txt", "idenc", ck.meta);
  res.losses = std::move(losses);
  return res;
}

Autoencoder load_autoencoder(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.kind != "autoenc") throw StateError(path + ": not an autoencoder checkpoint");
  Autoencoder ae;
  Rng rng(0);
  ae.init(rng, static_cast<int>(ck.meta_double("base", 32)),
          static_cast<int>(ck.meta_double("latent_channels", 4)));
  ck.load_into(ae.params());
  ae.latent_scale = ck.meta_double("latent_scale", 1.0);
  return ae;
}

IdEncoder load_idencoder(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.kind != "idenc") throw StateError(path + ": not an id-encoder checkpoint");
  IdEncoder enc;
  Rng rng(0);
  enc.init(static_cast<int>(ck.meta_double("n_classes", 1)), rng);
  ck.load_into(enc.params());
  return enc;
}

Denoiser make_denoiser(uint64_t seed) {
  Denoiser den;
  Rng rng(derive_seed(seed, 0xDE401));
  den.init(UNetConfig{}, rng);
  return den;
}

void load_denoiser(Denoiser& model, const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.kind != "denoiser") throw StateError(path + ": not a denoiser checkpoint");
  ck.load_into(model.params_all());
}

TrainResult train_stage(const TrainConfig& cfg, const CorpusManifest& corpus,
                        const std::string& cache_dir) {
  cfg.validate();
  const std::string name = cfg.stage == "1"    ? "stage1"
                           : cfg.stage == "1b" ? "stage1b"
                           : cfg.stage == "2"  ? "stage2"
                                               : "single";

  Autoencoder ae = load_autoencoder(require_ckpt(cache_dir, "autoenc"));
  const bool use_ref = cfg.stage != "1";
  IdEncoder idenc;
  if (use_ref) idenc = load_idencoder(require_ckpt(cache_dir, "idenc"));

  Denoiser den = make_denoiser(cfg.seed);
  std::string lineage = "fresh";
  if (cfg.stage == "1b") lineage = require_ckpt(cache_dir, "stage1");
  if (cfg.stage == "2") lineage = require_ckpt(cache_dir, "stage1b");
  if (lineage != "fresh") load_denoiser(den, lineage);

  ParamList<float> trainable;
  std::vector<std::string> frozen_groups;
  if (cfg.stage == "1") {
    trainable = den.params_base();
    ParamList<float> lq = den.params_lq();
    trainable.insert(trainable.end(), lq.begin(), lq.end());
    frozen_groups = {"id", "fir"};
  } else if (cfg.stage == "1b") {
    trainable = den.params_id();
    frozen_groups = {"base", "lq", "fir"};
  } else if (cfg.stage == "2") {
    trainable = den.params_fir();
    frozen_groups = {"base", "lq", "id"};
  } else {
    trainable = den.params_all();
  }

  std::vector<uint64_t> frozen_hashes;
  for (const auto& gname : frozen_groups)
    frozen_hashes.push_back(params_hash(den.params_group(gname)));
  const uint64_t ae_hash = params_hash(ae.params());

  DiffusionSchedule sched = DiffusionSchedule::linear();
  AdamW<float> opt;
  opt.lr = cfg.lr;

  std::vector<int> ids;
  for (int id : corpus.identity_labels(false))
    if (corpus.entries_of(id).size() >= 2) ids.push_back(id);
  if (ids.empty()) throw ValidationError("train_stage: no identities with >= 2 variations");

  std::unordered_map<std::string, Tensor> lat_cache;
  std::unordered_map<std::string, IdentityEmbedding> emb_cache;
  const int B = cfg.batch_size;
  const int64_t lat_per = 4LL * 16 * 16;
  // IP-Adapter-style pretraining runs the id branch at full strength
  const double lambda = cfg.stage == "1b" ? 1.0 : cfg.lambda_train;

  std::vector<double> losses;
  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng(derive_seed(cfg.seed, 10000 + static_cast<uint64_t>(it)));
    const bool drop_lq = rng.uniform(0, 1) < cfg.drop_lq_prob;
    const bool drop_ref = !use_ref || rng.uniform(0, 1) < cfg.drop_ref_prob;

    Tensor z0({B, 4, 16, 16}), lq_lat({B, 4, 16, 16}), ref_emb({B, kIdEmbedDim});
    std::vector<int> t(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
      int id = ids[static_cast<size_t>(rng.uniform_int(static_cast<int>(ids.size())))];
      Severity sev = rng.uniform(0, 1) < cfg.heavy_frac ? Severity::kHeavy : Severity::kLight;
      TrainingPair pair = make_training_pair(corpus, id, rng.next_seed(), sev);

      auto hq_it = lat_cache.find(pair.hq_path);
      if (hq_it == lat_cache.end())
        hq_it = lat_cache.emplace(pair.hq_path, ae.encode_image(pair.hq)).first;
      std::copy(hq_it->second.data.begin(), hq_it->second.data.end(),
                z0.ptr() + b * lat_per);

      if (!drop_lq) {
        Tensor zl = ae.encode_image(pair.lq);
        std::copy(zl.data.begin(), zl.data.end(), lq_lat.ptr() + b * lat_per);
      }
      if (!drop_ref) {
        auto emb_it = emb_cache.find(pair.ref_path);
        if (emb_it == emb_cache.end())
          emb_it = emb_cache.emplace(pair.ref_path, embed(idenc, pair.ref)).first;
        std::copy(emb_it->second.begin(), emb_it->second.end(),
                  ref_emb.ptr() + b * kIdEmbedDim);
      }
      t[static_cast<size_t>(b)] = rng.uniform_int(sched.T);
    }
    Tensor eps = Tensor::randn(z0.shape, rng);

    zero_grads(trainable);
    Graph<float> g;
    Var<float> loss = diffusion_loss(g, den, sched, z0, t, drop_lq ? nullptr : &lq_lat,
                                     drop_ref ? nullptr : &ref_emb, eps, lambda);
    g.backward(loss.id);
    opt.step(trainable);
    losses.push_back(static_cast<double>(loss.val()[0]));
  }

  for (size_t i = 0; i < frozen_groups.size(); ++i)
    if (params_hash(den.params_group(frozen_groups[i])) != frozen_hashes[i])
      throw StateError("train_stage: frozen group '" + frozen_groups[i] + "' mutated");
  if (params_hash(ae.params()) != ae_hash)
    throw StateError("train_stage: autoencoder weights mutated");

  Checkpoint ck;
  ck.kind = "denoiser";
  ck.meta = cfg.to_kv();
  ck.meta["lineage"] = lineage;
  if (lineage != "fresh") ck.meta["lineage_hash"] = std::to_string(file_hash(lineage));
  ck.put_params(den.params_all());
  TrainResult res;
  res.ckpt_path = ckpt_path(cache_dir, name);
  ck.save(res.ckpt_path);
  write_loss_csv(cache_dir + "/" + name + "_loss.csv", losses);
  write_model_card(cache_dir + "/" + name + "_card.txt", "denoiser", ck.meta);
  res.losses = std::move(losses);
  return res;
}

}  // namespace rid
