#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "restorerid/autoenc.h"
#include "restorerid/unet.h"

namespace rid {

// Linear beta schedule, T=1000, with cumulative alpha products.
struct DiffusionSchedule {
  int T = 1000;
  std::vector<double> betas, alphas, alpha_bar;

  static DiffusionSchedule linear(int T = 1000, double beta_start = 1e-4,
                                  double beta_end = 0.02);
  void check_t(int t) const;
};

// sqrt(ab_t)·z0 + sqrt(1-ab_t)·eps
Tensor add_noise(const DiffusionSchedule& sched, const Tensor& z0, int t,
                 const Tensor& eps);

struct SamplerConfig {
  int ddim_steps = 50;
  double eta = 0.0;
  double cfg_weight = 7.5;
  uint64_t seed = 0;
  // which conditions the unconditional CFG pass drops: both | lq | ref
  std::string uncond_mode = "both";

  void validate(int T) const;
};

// ‖eps − ε_θ(z_t, ·, t)‖² averaged over the batch. Absent conditions enter as
// zero tensors (null pyramid / no identity tokens). Templated so the same code
// runs under the double-precision finite-difference oracle.
template <typename T>
Var<T> diffusion_loss(Graph<T>& g, DenoiserT<T>& model, const DiffusionSchedule& sched,
                      const TensorT<T>& z0, const std::vector<int>& t,
                      const TensorT<T>* lq_latent, const TensorT<T>* ref_embeds,
                      const TensorT<T>& eps, double lambda) {
  if (!same_shape(z0, eps)) throw ValidationError("diffusion_loss: z0/eps shape mismatch");
  const int n = z0.dim(0);
  if (static_cast<int>(t.size()) != n)
    throw ValidationError("diffusion_loss: one timestep per sample required");
  const int64_t per = z0.numel() / n;
  TensorT<T> zt(z0.shape);
  std::vector<double> td(t.size());
  for (int i = 0; i < n; ++i) {
    sched.check_t(t[i]);
    td[i] = static_cast<double>(t[i]);
    const double ab = sched.alpha_bar[static_cast<size_t>(t[i])];
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    for (int64_t k = 0; k < per; ++k)
      zt[i * per + k] = static_cast<T>(sa * z0[i * per + k] + sb * eps[i * per + k]);
  }

  std::array<Var<T>, 3> pyr;
  const std::array<Var<T>, 3>* pyr_ptr = nullptr;
  if (lq_latent) {
    pyr = model.lq_extract(g, constant(g, *lq_latent), td);
    pyr_ptr = &pyr;
  }
  Var<T> id_tokens{};
  if (ref_embeds) id_tokens = project_tokens(g, model.projector, *ref_embeds);

  Var<T> pred = model.fwd(g, constant(g, zt), td, pyr_ptr, id_tokens, lambda);
  return mse(pred, eps);
}

// DDIM (eta=0) over the latent with classifier-free guidance:
//   ε = ε_uncond + cfg_weight·(ε_cond − ε_uncond)
Tensor ddim_sample_latent(Denoiser& model, const DiffusionSchedule& sched,
                          const Tensor* lq_latent, const IdentityEmbedding* ref_embed,
                          const SamplerConfig& cfg, double lambda);

// full image pipeline: encode LQ, embed reference, sample, decode
Image ddim_sample(Autoencoder& ae, IdEncoder& idenc, Denoiser& model,
                  const DiffusionSchedule& sched, const Image& lq, const Image* ref,
                  const SamplerConfig& cfg, double lambda);

}  // namespace rid
