#pragma once

#include <string>

#include "restorerid/aidsa.h"
#include "restorerid/diffusion.h"
#include "restorerid/metrics.h"
#include "restorerid/training.h"

namespace rid {

// Everything needed to restore an image: frozen codecs plus one denoiser
// variant. `variant` picks the checkpoint and the ID-scale policy:
//   base   -> stage1,  no identity branch
//   id     -> stage1b, fixed lambda
//   fir    -> stage2,  fixed lambda
//   aidsa  -> stage2,  lambda = id_scale(quality_score(lq))
//   single -> single,  fixed lambda
struct Pipeline {
  Autoencoder ae;
  IdEncoder idenc;
  Denoiser den = make_denoiser(0);
  DiffusionSchedule sched = DiffusionSchedule::linear();
  AidsaConfig aidsa;
  std::string variant = "base";
  double fixed_lambda = 0.75;

  static std::string ckpt_name(const std::string& variant) {
    if (variant == "base") return "stage1";
    if (variant == "id") return "stage1b";
    if (variant == "fir" || variant == "aidsa") return "stage2";
    if (variant == "single") return "single";
    throw ConfigError("unknown pipeline variant: " + variant);
  }

  static Pipeline load(const std::string& cache_dir, const std::string& variant) {
    Pipeline p;
    p.variant = variant;
    p.ae = load_autoencoder(ckpt_path(cache_dir, "autoenc"));
    p.idenc = load_idencoder(ckpt_path(cache_dir, "idenc"));
    load_denoiser(p.den, ckpt_path(cache_dir, ckpt_name(variant)));
    return p;
  }

  double lambda_for(const Image& lq) const {
    if (variant == "base") return 0.0;
    if (variant == "aidsa") return id_scale(quality_score(lq), aidsa);
    return fixed_lambda;
  }

  Image restore(const Image& lq, const Image* ref, const SamplerConfig& sampler,
                double lambda) {
    const Image* use_ref = variant == "base" ? nullptr : ref;
    return ddim_sample(ae, idenc, den, sched, lq, use_ref, sampler, lambda);
  }

  // adapter for the evalkit/sweep harnesses
  Restorer restorer(SamplerConfig sampler) {
    return [this, sampler](const Image& lq, const Image& ref, uint64_t seed) {
      SamplerConfig s = sampler;
      s.seed = seed;
      return restore(lq, &ref, s, lambda_for(lq));
    };
  }

  SweepRestorer sweep_restorer(SamplerConfig sampler) {
    return [this, sampler](const Image& lq, const Image& ref, double lambda,
                           uint64_t seed) {
      SamplerConfig s = sampler;
      s.seed = seed;
      return restore(lq, &ref, s, lambda);
    };
  }
};

// one (gt, ref) pair per identity: first variation as ground truth, second as
// reference; heldout_only limits to held-out identities when any exist
std::vector<EvalItem> eval_items_from_corpus(const CorpusManifest& corpus,
                                             bool heldout_only, int max_n);

}  // namespace rid
