#include "restorerid/diffusion.h"

#include <cmath>

namespace rid {

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("schedule: T must be positive");
  DiffusionSchedule s;
  s.T = T;
  s.betas.resize(static_cast<size_t>(T));
  s.alphas.resize(static_cast<size_t>(T));
  s.alpha_bar.resize(static_cast<size_t>(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    double b = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
    s.betas[static_cast<size_t>(t)] = b;
    s.alphas[static_cast<size_t>(t)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar[static_cast<size_t>(t)] = prod;
  }
  return s;
}

void DiffusionSchedule::check_t(int t) const {
  if (t < 0 || t >= T) throw ValidationError("timestep out of range");
}

Tensor add_noise(const DiffusionSchedule& sched, const Tensor& z0, int t,
                 const Tensor& eps) {
  sched.check_t(t);
  if (!same_shape(z0, eps)) throw ValidationError("add_noise: z0/eps shape mismatch");
  const double ab = sched.alpha_bar[static_cast<size_t>(t)];
  const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
  Tensor out(z0.shape);
  for (int64_t i = 0; i < z0.numel(); ++i)
    out[i] = static_cast<float>(sa * z0[i] + sb * eps[i]);
  return out;
}

void SamplerConfig::validate(int T) const {
  if (ddim_steps < 1 || ddim_steps > T)
    throw ValidationError("sampler: ddim_steps outside [1,T]");
  if (cfg_weight < 0) throw ValidationError("sampler: cfg_weight must be >= 0");
  if (eta != 0.0) throw ConfigError("sampler: only eta=0 is supported");
  if (uncond_mode != "both" && uncond_mode != "lq" && uncond_mode != "ref")
    throw ConfigError("sampler: uncond_mode must be both|lq|ref");
}

namespace {

// one ε prediction; lq/id may be null to drop that condition
Tensor predict_eps(Denoiser& model, const Tensor& zt, double t, const Tensor* lq_latent,
                   const Tensor* id_embeds, double lambda) {
  Graph<float> g;
  std::vector<double> td{t};
  std::array<Var<float>, 3> pyr;
  const std::array<Var<float>, 3>* pyr_ptr = nullptr;
  if (lq_latent) {
    pyr = model.lq_extract(g, constant(g, *lq_latent), td);
    pyr_ptr = &pyr;
  }
  Var<float> tokens{};
  if (id_embeds) tokens = project_tokens(g, model.projector, *id_embeds);
  return model.fwd(g, constant(g, zt), td, pyr_ptr, tokens, lambda).val();
}

}  // namespace

Tensor ddim_sample_latent(Denoiser& model, const DiffusionSchedule& sched,
                          const Tensor* lq_latent, const IdentityEmbedding* ref_embed,
                          const SamplerConfig& cfg, double lambda) {
  cfg.validate(sched.T);
  const int c = model.cfg.latent_channels, s = model.cfg.latent_size;

  Tensor id_embeds;
  if (ref_embed) {
    if (ref_embed->size() != static_cast<size_t>(kIdEmbedDim))
      throw ValidationError("ddim_sample: bad reference embedding size");
    id_embeds = Tensor({1, kIdEmbedDim});
    std::copy(ref_embed->begin(), ref_embed->end(), id_embeds.ptr());
  }

  Rng rng(cfg.seed);
  Tensor z = Tensor::randn({1, c, s, s}, rng);

  // uniform stride through [0, T)
  std::vector<int> ts(static_cast<size_t>(cfg.ddim_steps));
  for (int i = 0; i < cfg.ddim_steps; ++i)
    ts[static_cast<size_t>(i)] = (i * sched.T) / cfg.ddim_steps;

  const bool drop_lq = cfg.uncond_mode == "both" || cfg.uncond_mode == "lq";
  const bool drop_ref = cfg.uncond_mode == "both" || cfg.uncond_mode == "ref";

  for (int i = cfg.ddim_steps - 1; i >= 0; --i) {
    const int t = ts[static_cast<size_t>(i)];
    const int t_prev = i > 0 ? ts[static_cast<size_t>(i - 1)] : -1;

    Tensor eps = predict_eps(model, z, t, lq_latent, ref_embed ? &id_embeds : nullptr, lambda);
    if (cfg.cfg_weight != 1.0) {
      Tensor eps_u = predict_eps(model, z, t, drop_lq ? nullptr : lq_latent,
                                 (drop_ref || !ref_embed) ? nullptr : &id_embeds, lambda);
      for (int64_t k = 0; k < eps.numel(); ++k)
        eps[k] = static_cast<float>(eps_u[k] + cfg.cfg_weight * (eps[k] - eps_u[k]));
    }

    const double ab_t = sched.alpha_bar[static_cast<size_t>(t)];
    const double ab_s = t_prev >= 0 ? sched.alpha_bar[static_cast<size_t>(t_prev)] : 1.0;
    const double sa_t = std::sqrt(ab_t), sb_t = std::sqrt(1.0 - ab_t);
    const double sa_s = std::sqrt(ab_s), sb_s = std::sqrt(1.0 - ab_s);
    for (int64_t k = 0; k < z.numel(); ++k) {
      double x0 = (z[k] - sb_t * eps[k]) / sa_t;
      z[k] = static_cast<float>(sa_s * x0 + sb_s * eps[k]);
    }
  }
  return z;
}

Image ddim_sample(Autoencoder& ae, IdEncoder& idenc, Denoiser& model,
                  const DiffusionSchedule& sched, const Image& lq, const Image* ref,
                  const SamplerConfig& cfg, double lambda) {
  Tensor lq_latent = ae.encode_image(lq);
  IdentityEmbedding e;
  if (ref) e = embed(idenc, *ref);
  Tensor z = ddim_sample_latent(model, sched, &lq_latent, ref ? &e : nullptr, cfg, lambda);
  Image out = ae.decode_latent(z);
  clamp01(out);
  return out;
}

}  // namespace rid
