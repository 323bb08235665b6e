#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "restorerid/idenc.h"
#include "restorerid/nn.h"

namespace rid {

struct UNetConfig {
  int latent_channels = 4;
  int latent_size = 16;
  int base_width = 64;
  std::vector<int> channel_mults = {1, 2, 4};
  std::vector<int> attention_resolutions = {16, 8};
  int time_embed_dim = 256;
  int n_heads = 4;
  int null_context_tokens = 4;
  int d_ctx = kIdEmbedDim;  // identity/null token width

  void validate() const {
    if (channel_mults != std::vector<int>{1, 2, 4})
      throw ConfigError("unet: only channel_mults [1,2,4] is supported");
    if (latent_size != 16) throw ConfigError("unet: latent_size must be 16");
    if (base_width % 8 != 0) throw ConfigError("unet: base_width must be divisible by 8");
  }

  bool attn_at(int res) const {
    return std::find(attention_resolutions.begin(), attention_resolutions.end(), res) !=
           attention_resolutions.end();
  }
};

// ------------------------------------------------------------- time embedding

template <typename T>
struct TimeEmbedT {
  int sin_dim = 128, dim = 256;
  LinearLayer<T> l1, l2;

  void init(const std::string& name, int dim_, Rng& rng) {
    dim = dim_;
    l1.init(name + ".l1", sin_dim, dim, rng);
    l2.init(name + ".l2", dim, dim, rng);
  }

  void collect(ParamList<T>& out) {
    l1.collect(out);
    l2.collect(out);
  }

  // (N, dim) embedding from per-sample timesteps
  Var<T> fwd(Graph<T>& g, const std::vector<double>& t) {
    const int n = static_cast<int>(t.size()), half = sin_dim / 2;
    TensorT<T> s({n, sin_dim});
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < half; ++k) {
        double f = std::exp(-std::log(10000.0) * k / (half - 1));
        s[static_cast<int64_t>(i) * sin_dim + k] = static_cast<T>(std::sin(t[i] * f));
        s[static_cast<int64_t>(i) * sin_dim + half + k] = static_cast<T>(std::cos(t[i] * f));
      }
    return l2.fwd(g, silu(l1.fwd(g, constant(g, std::move(s)))));
  }
};

// ------------------------------------------------------------------ SFT

// (1 + gamma(f)) ⊙ h + beta(f); zero-init convs make it the identity at start
template <typename T>
struct SFTLayerT {
  Conv2dLayer<T> gamma, beta;

  void init(const std::string& name, int c, Rng& rng) {
    gamma.init(name + ".gamma", c, c, 1, rng, 1, /*wscale=*/0.0);
    beta.init(name + ".beta", c, c, 1, rng, 1, /*wscale=*/0.0);
  }

  void collect(ParamList<T>& out) {
    gamma.collect(out);
    beta.collect(out);
  }

  Var<T> fwd(Graph<T>& g, Var<T> h, Var<T> f) {
    return add(add(h, mul(gamma.fwd(g, f), h)), beta.fwd(g, f));
  }
};

template <typename T>
Var<T> sft_modulate(Graph<T>& g, SFTLayerT<T>& sft, Var<T> h, Var<T> f_lq) {
  if (h.shape() != f_lq.shape())
    throw ValidationError("sft_modulate: feature shape mismatch");
  return sft.fwd(g, h, f_lq);
}

// ------------------------------------------------------------------ ResBlock

template <typename T>
struct ResBlockT {
  GroupNormLayer<T> gn1, gn2;
  Conv2dLayer<T> conv1, conv2, skip;
  LinearLayer<T> temb;
  SFTLayerT<T> sft;
  bool has_skip = false, has_sft = false;

  void init(const std::string& name, int cin, int cout, int temb_dim, Rng& rng,
            bool with_sft = false) {
    gn1.init(name + ".gn1", cin);
    conv1.init(name + ".conv1", cin, cout, 3, rng);
    temb.init(name + ".temb", temb_dim, cout, rng);
    gn2.init(name + ".gn2", cout);
    conv2.init(name + ".conv2", cout, cout, 3, rng, 1, /*wscale=*/0.0);
    has_skip = cin != cout;
    if (has_skip) skip.init(name + ".skip", cin, cout, 1, rng);
    has_sft = with_sft;
    if (with_sft) sft.init(name + ".sft", cout, rng);
  }

  void collect(ParamList<T>& out) {
    gn1.collect(out);
    conv1.collect(out);
    temb.collect(out);
    gn2.collect(out);
    conv2.collect(out);
    if (has_skip) skip.collect(out);
    if (has_sft) sft.collect(out);
  }

  Var<T> fwd(Graph<T>& g, Var<T> x, Var<T> t, Var<T> f_lq = {}) {
    Var<T> h = conv1.fwd(g, silu(gn1.fwd(g, x)));
    h = add_channel_bias(h, temb.fwd(g, silu(t)));
    h = conv2.fwd(g, silu(gn2.fwd(g, h)));
    if (has_sft && f_lq.valid()) h = sft_modulate(g, sft, h, f_lq);
    return add(has_skip ? skip.fwd(g, x) : x, h);
  }
};

// ------------------------------------------------- self + decoupled cross attn

// Self-attention followed by decoupled cross-attention:
//   Z = Attn(Q, K^t, V^t) + λ · Attn(Q, K^i, V^i)
// K^t/V^t read the learned null-context tokens (text stand-in), K^i/V^i read
// the identity tokens; Q and the output projection are shared by both branches.
template <typename T>
struct AttnBlockT {
  int heads = 4, d_ctx = kIdEmbedDim;
  LayerNormLayer<T> ln1, ln2;
  LinearLayer<T> sq, sk, sv, sout;
  LinearLayer<T> cq, kt, vt, ki, vi, cout;
  Param<T> null_ctx;

  void init(const std::string& name, int c, int d_ctx_, int n_null, int heads_, Rng& rng) {
    heads = heads_;
    d_ctx = d_ctx_;
    ln1.init(name + ".ln1", c);
    ln2.init(name + ".ln2", c);
    sq.init(name + ".sq", c, c, rng, false);
    sk.init(name + ".sk", c, c, rng, false);
    sv.init(name + ".sv", c, c, rng, false);
    sout.init(name + ".sout", c, c, rng, true, /*wscale=*/0.0);
    cq.init(name + ".cq", c, c, rng, false);
    kt.init(name + ".kt", d_ctx, c, rng, false);
    vt.init(name + ".vt", d_ctx, c, rng, false);
    ki.init(name + ".ki", d_ctx, c, rng, false);
    vi.init(name + ".vi", d_ctx, c, rng, false);
    cout.init(name + ".cout", c, c, rng, true, /*wscale=*/0.0);
    null_ctx.name = name + ".null_ctx";
    null_ctx.value = TensorT<T>::randn({n_null, d_ctx}, rng, T(0.02));
  }

  void collect_base(ParamList<T>& out) {
    ln1.collect(out);
    ln2.collect(out);
    sq.collect(out);
    sk.collect(out);
    sv.collect(out);
    sout.collect(out);
    cq.collect(out);
    kt.collect(out);
    vt.collect(out);
    cout.collect(out);
    out.push_back(&null_ctx);
  }

  void collect_id(ParamList<T>& out) {
    ki.collect(out);
    vi.collect(out);
  }

  Var<T> fwd(Graph<T>& g, Var<T> x, Var<T> id_tokens, double lambda) {
    const int n = x.val().dim(0), h = x.val().dim(2), w = x.val().dim(3);
    if (id_tokens.valid() && id_tokens.val().dim(2) != d_ctx)
      throw ValidationError("decoupled attention: token dim mismatch");
    Var<T> tok = nchw_to_tokens(x);
    Var<T> t1 = ln1.fwd(g, tok);
    tok = add(tok, sout.fwd(g, mha(sq.fwd(g, t1), sk.fwd(g, t1), sv.fwd(g, t1), heads)));
    Var<T> t2 = ln2.fwd(g, tok);
    Var<T> q = cq.fwd(g, t2);
    Var<T> nc = broadcast_batch(leaf(g, null_ctx), n);
    Var<T> a = mha(q, kt.fwd(g, nc), vt.fwd(g, nc), heads);
    if (id_tokens.valid() && lambda != 0.0)
      a = add_scaled(a, mha(q, ki.fwd(g, id_tokens), vi.fwd(g, id_tokens), heads), lambda);
    tok = add(tok, cout.fwd(g, a));
    return tokens_to_nchw(tok, h, w);
  }
};

// ------------------------------------------------------------------ FIR

// Rebalancing adapter: F_en = f_lq + Attn(Q(f_lq), K(id), V(id)); shared
// LayerNorm feeds a gain branch and a bias branch of two convs each; output
// G ⊙ x + B. Zero weights with G-bias 1 / B-bias 0 make it the exact identity
// at initialisation.
template <typename T>
struct FIRAdapterT {
  int heads = 4;
  LinearLayer<T> q, k, v, out;
  LayerNormLayer<T> ln;
  Conv2dLayer<T> g1, g2, b1, b2;

  void init(const std::string& name, int c, int d_ctx, int heads_, Rng& rng) {
    heads = heads_;
    q.init(name + ".q", c, c, rng, false);
    k.init(name + ".k", d_ctx, c, rng, false);
    v.init(name + ".v", d_ctx, c, rng, false);
    out.init(name + ".out", c, c, rng, true);
    ln.init(name + ".ln", c);
    const int mid = std::max(8, c / 2);
    g1.init(name + ".g1", c, mid, 3, rng);
    g2.init_zero(name + ".g2", mid, c, 3, T(1));
    b1.init(name + ".b1", c, mid, 3, rng);
    b2.init_zero(name + ".b2", mid, c, 3, T(0));
  }

  void collect(ParamList<T>& outp) {
    q.collect(outp);
    k.collect(outp);
    v.collect(outp);
    out.collect(outp);
    ln.collect(outp);
    g1.collect(outp);
    g2.collect(outp);
    b1.collect(outp);
    b2.collect(outp);
  }

  Var<T> fwd(Graph<T>& g, Var<T> x, Var<T> f_lq, Var<T> id_tokens) {
    if (x.shape() != f_lq.shape())
      throw ValidationError("fir_forward: x / f_lq shape mismatch");
    const int h = f_lq.val().dim(2), w = f_lq.val().dim(3);
    Var<T> tf = nchw_to_tokens(f_lq);
    Var<T> att =
        out.fwd(g, mha(q.fwd(g, tf), k.fwd(g, id_tokens), v.fwd(g, id_tokens), heads));
    Var<T> fen = tokens_to_nchw(ln.fwd(g, add(tf, att)), h, w);
    Var<T> gain = g2.fwd(g, g1.fwd(g, fen));
    Var<T> bias = b2.fwd(g, b1.fwd(g, fen));
    return add(mul(gain, x), bias);
  }
};

// ------------------------------------------------------------- LQ extractor

// Time-conditioned pyramid over the LQ latent: widths w,2w,4w at 16,8,4.
template <typename T>
struct LQEncoderT {
  TimeEmbedT<T> time_embed;
  Conv2dLayer<T> conv_in, down0, down1;
  ResBlockT<T> res0, res1, res2;

  void init(const UNetConfig& cfg, Rng& rng) {
    const int w = cfg.base_width;
    time_embed.init("lq.time", cfg.time_embed_dim, rng);
    conv_in.init("lq.conv_in", cfg.latent_channels, w, 3, rng);
    res0.init("lq.res0", w, w, cfg.time_embed_dim, rng);
    down0.init("lq.down0", w, 2 * w, 3, rng, 2);
    res1.init("lq.res1", 2 * w, 2 * w, cfg.time_embed_dim, rng);
    down1.init("lq.down1", 2 * w, 4 * w, 3, rng, 2);
    res2.init("lq.res2", 4 * w, 4 * w, cfg.time_embed_dim, rng);
  }

  void collect(ParamList<T>& out) {
    time_embed.collect(out);
    conv_in.collect(out);
    res0.collect(out);
    down0.collect(out);
    res1.collect(out);
    down1.collect(out);
    res2.collect(out);
  }

  std::array<Var<T>, 3> fwd(Graph<T>& g, Var<T> lq_latent, const std::vector<double>& t) {
    Var<T> temb = time_embed.fwd(g, t);
    Var<T> h = res0.fwd(g, conv_in.fwd(g, lq_latent), temb);
    std::array<Var<T>, 3> pyr;
    pyr[0] = h;
    h = res1.fwd(g, down0.fwd(g, h), temb);
    pyr[1] = h;
    h = res2.fwd(g, down1.fwd(g, h), temb);
    pyr[2] = h;
    return pyr;
  }
};

// ------------------------------------------------------------------ denoiser

// Full ε-prediction UNet plus its conditioning branches. Parameter groups map
// onto the training stages: "base" (stage 1, with "lq"), "id" (stage 1b),
// "fir" (stage 2).
template <typename T>
struct DenoiserT {
  UNetConfig cfg;
  TimeEmbedT<T> time_embed;
  LQEncoderT<T> lq_enc;
  TokenProjectorT<T> projector;

  Conv2dLayer<T> conv_in, down0, down1, up1, up0, conv_out;
  ResBlockT<T> enc0, enc1, enc2, mid, dec2, dec1, dec0;
  AttnBlockT<T> attn_enc0, attn_enc1, attn_dec1, attn_dec0;
  FIRAdapterT<T> fir_enc0, fir_enc1, fir_dec1, fir_dec0;
  GroupNormLayer<T> gn_out;

  void init(const UNetConfig& cfg_, Rng& rng) {
    cfg = cfg_;
    cfg.validate();
    const int w = cfg.base_width, te = cfg.time_embed_dim;
    const int nh = cfg.n_heads, dc = cfg.d_ctx, nn = cfg.null_context_tokens;

    time_embed.init("unet.time", te, rng);
    lq_enc.init(cfg, rng);
    projector.init(rng, dc);

    conv_in.init("unet.conv_in", cfg.latent_channels, w, 3, rng);
    enc0.init("unet.enc0", w, w, te, rng, /*sft=*/true);
    attn_enc0.init("unet.attn_enc0", w, dc, nn, nh, rng);
    fir_enc0.init("unet.fir_enc0", w, dc, nh, rng);
    down0.init("unet.down0", w, 2 * w, 3, rng, 2);
    enc1.init("unet.enc1", 2 * w, 2 * w, te, rng, /*sft=*/true);
    attn_enc1.init("unet.attn_enc1", 2 * w, dc, nn, nh, rng);
    fir_enc1.init("unet.fir_enc1", 2 * w, dc, nh, rng);
    down1.init("unet.down1", 2 * w, 4 * w, 3, rng, 2);
    enc2.init("unet.enc2", 4 * w, 4 * w, te, rng, /*sft=*/true);
    mid.init("unet.mid", 4 * w, 4 * w, te, rng);
    dec2.init("unet.dec2", 8 * w, 4 * w, te, rng);
    up1.init("unet.up1", 4 * w, 2 * w, 3, rng);
    dec1.init("unet.dec1", 4 * w, 2 * w, te, rng);
    attn_dec1.init("unet.attn_dec1", 2 * w, dc, nn, nh, rng);
    fir_dec1.init("unet.fir_dec1", 2 * w, dc, nh, rng);
    up0.init("unet.up0", 2 * w, w, 3, rng);
    dec0.init("unet.dec0", 2 * w, w, te, rng);
    attn_dec0.init("unet.attn_dec0", w, dc, nn, nh, rng);
    fir_dec0.init("unet.fir_dec0", w, dc, nh, rng);
    gn_out.init("unet.gn_out", w);
    conv_out.init("unet.conv_out", w, cfg.latent_channels, 3, rng, 1, /*wscale=*/0.0);
  }

  ParamList<T> params_base() {
    ParamList<T> out;
    time_embed.collect(out);
    conv_in.collect(out);
    enc0.collect(out);
    attn_enc0.collect_base(out);
    down0.collect(out);
    enc1.collect(out);
    attn_enc1.collect_base(out);
    down1.collect(out);
    enc2.collect(out);
    mid.collect(out);
    dec2.collect(out);
    up1.collect(out);
    dec1.collect(out);
    attn_dec1.collect_base(out);
    up0.collect(out);
    dec0.collect(out);
    attn_dec0.collect_base(out);
    gn_out.collect(out);
    conv_out.collect(out);
    return out;
  }

  ParamList<T> params_lq() {
    ParamList<T> out;
    lq_enc.collect(out);
    return out;
  }

  ParamList<T> params_id() {
    ParamList<T> out = projector.params();
    attn_enc0.collect_id(out);
    attn_enc1.collect_id(out);
    attn_dec1.collect_id(out);
    attn_dec0.collect_id(out);
    return out;
  }

  ParamList<T> params_fir() {
    ParamList<T> out;
    fir_enc0.collect(out);
    fir_enc1.collect(out);
    fir_dec1.collect(out);
    fir_dec0.collect(out);
    return out;
  }

  ParamList<T> params_group(const std::string& name) {
    if (name == "base") return params_base();
    if (name == "lq") return params_lq();
    if (name == "id") return params_id();
    if (name == "fir") return params_fir();
    throw ConfigError("unknown parameter group: " + name);
  }

  ParamList<T> params_all() {
    ParamList<T> out = params_base();
    for (const char* gname : {"lq", "id", "fir"}) {
      ParamList<T> g = params_group(gname);
      out.insert(out.end(), g.begin(), g.end());
    }
    return out;
  }

  std::array<Var<T>, 3> lq_extract(Graph<T>& g, Var<T> lq_latent,
                                   const std::vector<double>& t) {
    return lq_enc.fwd(g, lq_latent, t);
  }

  // pyramid: pass nullptr for an absent LQ condition (zero maps are built
  // internally so SFT biases still see a defined input). id_tokens invalid ->
  // no identity branch, no FIR.
  Var<T> fwd(Graph<T>& g, Var<T> z, const std::vector<double>& t,
             const std::array<Var<T>, 3>* pyramid, Var<T> id_tokens, double lambda) {
    const int n = z.val().dim(0), w = cfg.base_width, s = cfg.latent_size;
    std::array<Var<T>, 3> zero_pyr;
    if (!pyramid) {
      zero_pyr[0] = constant(g, TensorT<T>::zeros({n, w, s, s}));
      zero_pyr[1] = constant(g, TensorT<T>::zeros({n, 2 * w, s / 2, s / 2}));
      zero_pyr[2] = constant(g, TensorT<T>::zeros({n, 4 * w, s / 4, s / 4}));
      pyramid = &zero_pyr;
    }
    const bool id = id_tokens.valid();
    Var<T> temb = time_embed.fwd(g, t);

    Var<T> h = conv_in.fwd(g, z);
    h = enc0.fwd(g, h, temb, (*pyramid)[0]);
    if (id) h = fir_enc0.fwd(g, h, (*pyramid)[0], id_tokens);
    h = attn_enc0.fwd(g, h, id_tokens, lambda);
    Var<T> skip0 = h;
    h = enc1.fwd(g, down0.fwd(g, h), temb, (*pyramid)[1]);
    if (id) h = fir_enc1.fwd(g, h, (*pyramid)[1], id_tokens);
    h = attn_enc1.fwd(g, h, id_tokens, lambda);
    Var<T> skip1 = h;
    h = enc2.fwd(g, down1.fwd(g, h), temb, (*pyramid)[2]);
    Var<T> skip2 = h;

    h = mid.fwd(g, h, temb);

    h = dec2.fwd(g, concat_channels(h, skip2), temb);
    h = up1.fwd(g, upsample_nearest2(h));
    h = dec1.fwd(g, concat_channels(h, skip1), temb);
    if (id) h = fir_dec1.fwd(g, h, (*pyramid)[1], id_tokens);
    h = attn_dec1.fwd(g, h, id_tokens, lambda);
    h = up0.fwd(g, upsample_nearest2(h));
    h = dec0.fwd(g, concat_channels(h, skip0), temb);
    if (id) h = fir_dec0.fwd(g, h, (*pyramid)[0], id_tokens);
    h = attn_dec0.fwd(g, h, id_tokens, lambda);

    return conv_out.fwd(g, silu(gn_out.fwd(g, h)));
  }
};

using Denoiser = DenoiserT<float>;

}  // namespace rid
