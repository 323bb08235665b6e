#include <cmath>

#include "doctest.h"
#include "restorerid/diffusion.h"

using namespace rid;

namespace {

UNetConfig micro_config() {
  UNetConfig cfg;
  cfg.base_width = 8;
  cfg.d_ctx = 16;
  cfg.n_heads = 2;
  cfg.time_embed_dim = 32;
  return cfg;
}

double max_abs(const Tensor& t) {
  double m = 0;
  for (float v : t.data) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

}  // namespace

TEST_CASE("linear schedule invariants") {
  DiffusionSchedule s = DiffusionSchedule::linear();
  CHECK(s.T == 1000);
  CHECK(s.betas.front() == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.betas.back() == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(s.alpha_bar.front() == doctest::Approx(1.0 - 1e-4).epsilon(1e-12));
  for (int t = 0; t < s.T; ++t) {
    CHECK(s.alphas[static_cast<size_t>(t)] == 1.0 - s.betas[static_cast<size_t>(t)]);
    CHECK(s.alpha_bar[static_cast<size_t>(t)] > 0.0);
    CHECK(s.alpha_bar[static_cast<size_t>(t)] < 1.0);
    if (t > 0) {
      CHECK(s.betas[static_cast<size_t>(t)] > s.betas[static_cast<size_t>(t - 1)]);
      CHECK(s.alpha_bar[static_cast<size_t>(t)] < s.alpha_bar[static_cast<size_t>(t - 1)]);
    }
  }
  CHECK(s.alpha_bar.back() < 1e-4);
  CHECK_THROWS_AS(s.check_t(-1), ValidationError);
  CHECK_THROWS_AS(s.check_t(1000), ValidationError);
  CHECK_THROWS_AS(DiffusionSchedule::linear(0), ConfigError);
}

TEST_CASE("add_noise endpoints and variance") {
  DiffusionSchedule s = DiffusionSchedule::linear();
  Rng rng(17);
  Tensor z0 = Tensor::randn({1, 4, 50, 50}, rng, 2.0f);
  Tensor eps = Tensor::randn({1, 4, 50, 50}, rng);

  // eps = 0 -> pure sqrt(ab)*z0; z0 = 0 -> pure sqrt(1-ab)*eps
  Tensor zero = Tensor::zeros(z0.shape);
  const double ab = s.alpha_bar[300];
  Tensor a = add_noise(s, z0, 300, zero);
  Tensor b = add_noise(s, zero, 300, eps);
  for (int64_t i = 0; i < z0.numel(); ++i) {
    CHECK(a[i] == doctest::Approx(std::sqrt(ab) * z0[i]).epsilon(1e-6));
    CHECK(b[i] == doctest::Approx(std::sqrt(1.0 - ab) * eps[i]).epsilon(1e-6));
  }

  // Var(out) ~= ab*Var(z0) + (1-ab) for independent draws
  Tensor out = add_noise(s, z0, 300, eps);
  double mean = 0, var = 0;
  for (float v : out.data) mean += v;
  mean /= static_cast<double>(out.numel());
  for (float v : out.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(out.numel());
  CHECK(var == doctest::Approx(ab * 4.0 + (1.0 - ab)).epsilon(0.03));

  Tensor wrong = Tensor::zeros({1, 4, 8, 8});
  CHECK_THROWS_AS(add_noise(s, z0, 300, wrong), ValidationError);
  CHECK_THROWS_AS(add_noise(s, z0, 1000, eps), ValidationError);
}

TEST_CASE("ddim x0-form inverts add_noise given the true eps") {
  DiffusionSchedule s = DiffusionSchedule::linear();
  Rng rng(19);
  Tensor z0 = Tensor::randn({1, 4, 16, 16}, rng);
  Tensor eps = Tensor::randn({1, 4, 16, 16}, rng);
  for (int t : {0, 137, 500, 999}) {
    Tensor zt = add_noise(s, z0, t, eps);
    const double ab = s.alpha_bar[static_cast<size_t>(t)];
    for (int64_t i = 0; i < z0.numel(); ++i) {
      double x0 = (zt[i] - std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(ab);
      CHECK(x0 == doctest::Approx(z0[i]).epsilon(1e-3));
    }
  }
}

TEST_CASE("diffusion_loss equals mean eps^2 for the zero predictor") {
  Denoiser den;
  Rng rng(23);
  den.init(micro_config(), rng);  // conv_out starts at zero -> predicts 0
  DiffusionSchedule s = DiffusionSchedule::linear();
  Rng drng(24);
  Tensor z0 = Tensor::randn({10, 4, 16, 16}, drng);
  Tensor lq = Tensor::randn({10, 4, 16, 16}, drng);
  Tensor emb = Tensor::randn({10, kIdEmbedDim}, drng);
  Tensor eps = Tensor::randn({10, 4, 16, 16}, drng);
  std::vector<int> t{10, 100, 200, 300, 400, 500, 600, 700, 800, 999};

  Graph<float> g;
  float loss = diffusion_loss(g, den, s, z0, t, &lq, &emb, eps, 0.75).val()[0];
  double want = 0;
  for (float v : eps.data) want += static_cast<double>(v) * v;
  want /= static_cast<double>(eps.numel());
  CHECK(loss == doctest::Approx(want).epsilon(1e-5));
  CHECK(loss == doctest::Approx(1.0).epsilon(0.05));

  std::vector<int> short_t{10};
  CHECK_THROWS_AS(diffusion_loss(g, den, s, z0, short_t, &lq, &emb, eps, 0.75),
                  ValidationError);
  Tensor bad_eps = Tensor::randn({10, 4, 8, 8}, drng);
  CHECK_THROWS_AS(diffusion_loss(g, den, s, z0, t, &lq, &emb, bad_eps, 0.75),
                  ValidationError);
}

TEST_CASE("zero predictor sampling telescopes to z_init / sqrt(ab_max)") {
  Denoiser den;
  Rng rng(29);
  den.init(micro_config(), rng);
  DiffusionSchedule s = DiffusionSchedule::linear();

  SamplerConfig cfg;
  cfg.ddim_steps = 20;
  cfg.cfg_weight = 7.5;
  cfg.seed = 5;
  Tensor z = ddim_sample_latent(den, s, nullptr, nullptr, cfg, 0.0);

  Rng zrng(cfg.seed);
  Tensor z_init = Tensor::randn({1, 4, 16, 16}, zrng);
  const int t_max = (19 * s.T) / 20;
  const double scale = 1.0 / std::sqrt(s.alpha_bar[static_cast<size_t>(t_max)]);
  for (int64_t i = 0; i < z.numel(); ++i)
    CHECK(z[i] == doctest::Approx(z_init[i] * scale).epsilon(1e-4));
}

TEST_CASE("sampling is deterministic in the seed") {
  Denoiser den;
  Rng rng(31);
  den.init(micro_config(), rng);
  den.conv_out.w.value = Tensor::randn(den.conv_out.w.value.shape, rng, 0.05f);
  DiffusionSchedule s = DiffusionSchedule::linear();
  Rng drng(32);
  Tensor lq = Tensor::randn({1, 4, 16, 16}, drng);

  SamplerConfig cfg;
  cfg.ddim_steps = 5;
  cfg.seed = 41;
  Tensor a = ddim_sample_latent(den, s, &lq, nullptr, cfg, 0.0);
  Tensor b = ddim_sample_latent(den, s, &lq, nullptr, cfg, 0.0);
  CHECK(a.data == b.data);
  cfg.seed = 42;
  Tensor c = ddim_sample_latent(den, s, &lq, nullptr, cfg, 0.0);
  CHECK(a.data != c.data);
}

TEST_CASE("guided eps is affine in cfg_weight (single step)") {
  Denoiser den;
  Rng rng(37);
  den.init(micro_config(), rng);
  // wake up the zero-initialized layers so the conditions actually matter
  den.conv_out.w.value = Tensor::randn(den.conv_out.w.value.shape, rng, 0.1f);
  den.enc0.sft.gamma.w.value = Tensor::randn(den.enc0.sft.gamma.w.value.shape, rng, 0.1f);
  den.attn_enc0.cout.w.value = Tensor::randn(den.attn_enc0.cout.w.value.shape, rng, 0.1f);
  den.lq_enc.res0.conv2.w.value = Tensor::randn(den.lq_enc.res0.conv2.w.value.shape, rng, 0.1f);
  DiffusionSchedule s = DiffusionSchedule::linear();
  Rng drng(38);
  Tensor lq = Tensor::randn({1, 4, 16, 16}, drng);
  IdentityEmbedding e(kIdEmbedDim, 0.0f);
  e[3] = 1.0f;

  SamplerConfig cfg;
  cfg.ddim_steps = 1;
  cfg.seed = 7;
  auto sample_w = [&](double w) {
    SamplerConfig c = cfg;
    c.cfg_weight = w;
    return ddim_sample_latent(den, s, &lq, &e, c, 1.0);
  };
  Tensor z0 = sample_w(0.0), z1 = sample_w(1.0), z2 = sample_w(2.0);

  Tensor d1(z0.shape), d2(z0.shape);
  for (int64_t i = 0; i < z0.numel(); ++i) {
    d1[i] = z1[i] - z0[i];
    d2[i] = z2[i] - z1[i];
  }
  CHECK(max_abs(d1) > 1e-6);  // conditioning must have an effect
  // affine up to float rounding: z is O(1), so allow a few ulps of slack
  for (int64_t i = 0; i < z0.numel(); ++i)
    CHECK(std::abs(d2[i] - d1[i]) < 1e-3 * max_abs(d1) + 1e-6);
}

TEST_CASE("sampler config validation") {
  DiffusionSchedule s = DiffusionSchedule::linear();
  SamplerConfig cfg;
  cfg.ddim_steps = 0;
  CHECK_THROWS_AS(cfg.validate(s.T), ValidationError);
  cfg.ddim_steps = 1001;
  CHECK_THROWS_AS(cfg.validate(s.T), ValidationError);
  cfg = SamplerConfig{};
  cfg.cfg_weight = -0.5;
  CHECK_THROWS_AS(cfg.validate(s.T), ValidationError);
  cfg = SamplerConfig{};
  cfg.eta = 0.3;
  CHECK_THROWS_AS(cfg.validate(s.T), ConfigError);
  cfg = SamplerConfig{};
  cfg.uncond_mode = "none";
  CHECK_THROWS_AS(cfg.validate(s.T), ConfigError);
  cfg = SamplerConfig{};
  CHECK_NOTHROW(cfg.validate(s.T));
}
