#pragma once

#include <map>
#include <string>
#include <vector>

#include "restorerid/autoenc.h"
#include "restorerid/checkpoint.h"
#include "restorerid/degrade.h"
#include "restorerid/diffusion.h"
#include "restorerid/idenc.h"
#include "restorerid/toyfaces.h"
#include "restorerid/unet.h"

namespace rid {

struct TrainConfig {
  std::string stage = "1";  // 1 | 1b | 2 | single
  int iterations = 2000;
  int batch_size = 16;
  double lr = 5e-5;
  double drop_lq_prob = 0.1;
  double drop_ref_prob = 0.1;
  double lambda_train = 0.75;
  uint64_t seed = 1;
  double heavy_frac = 0.5;  // severity mix

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct TrainResult {
  std::string ckpt_path;
  std::vector<double> losses;
};

struct TrainingPair {
  Image hq, lq, ref;
  std::string hq_path, ref_path;
};

// hq and ref: distinct variations of the identity; lq = degrade(hq)
TrainingPair make_training_pair(const CorpusManifest& corpus, int id_label,
                                uint64_t seed, Severity severity);

// checkpoint naming convention inside the cache directory
std::string ckpt_path(const std::string& cache_dir, const std::string& name);

TrainResult train_autoencoder(const CorpusManifest& corpus, int iterations,
                              int batch_size, double lr, uint64_t seed,
                              const std::string& cache_dir);
TrainResult train_idencoder(const CorpusManifest& corpus, int iterations,
                            int batch_size, double lr, uint64_t seed,
                            const std::string& cache_dir);

Autoencoder load_autoencoder(const std::string& path);
IdEncoder load_idencoder(const std::string& path);

// denoiser with the fixed desk-scale architecture, weights seeded from `seed`
Denoiser make_denoiser(uint64_t seed);
void load_denoiser(Denoiser& model, const std::string& path);

// stage "1": UNet + LQ branch; "1b": token projector + K^i/V^i only;
// "2": FIR adapters only (λ=lambda_train); "single": everything jointly.
// Writes <stage ckpt>, a loss CSV, and a model card into cache_dir.
TrainResult train_stage(const TrainConfig& cfg, const CorpusManifest& corpus,
                        const std::string& cache_dir);

}  // namespace rid
