#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "restorerid/image.h"
#include "restorerid/nn.h"

namespace rid {

constexpr int kIdEmbedDim = 128;
constexpr int kIdTokens = 4;

// Small CNN identity classifier; the penultimate feature, L2-normalised,
// is the identity embedding used for similarity and token injection.
template <typename T>
struct IdEncoderT {
  int n_classes = 0;

  Conv2dLayer<T> c0, c1, c2, c3;
  GroupNormLayer<T> n0, n1, n2, n3;
  LinearLayer<T> fc_embed, fc_class;

  void init(int n_classes_, Rng& rng) {
    n_classes = n_classes_;
    c0.init("id.c0", 3, 32, 3, rng);
    n0.init("id.n0", 32);
    c1.init("id.c1", 32, 64, 3, rng, /*stride=*/2);
    n1.init("id.n1", 64);
    c2.init("id.c2", 64, 128, 3, rng, /*stride=*/2);
    n2.init("id.n2", 128);
    c3.init("id.c3", 128, 128, 3, rng, /*stride=*/2);
    n3.init("id.n3", 128);
    fc_embed.init("id.fc_embed", 128, kIdEmbedDim, rng);
    fc_class.init("id.fc_class", kIdEmbedDim, n_classes, rng);
  }

  ParamList<T> params() {
    ParamList<T> out;
    c0.collect(out); n0.collect(out);
    c1.collect(out); n1.collect(out);
    c2.collect(out); n2.collect(out);
    c3.collect(out); n3.collect(out);
    fc_embed.collect(out);
    fc_class.collect(out);
    return out;
  }

  // pre-normalisation embedding, (N, kIdEmbedDim)
  Var<T> features(Graph<T>& g, Var<T> x) {
    Var<T> h = silu(n0.fwd(g, c0.fwd(g, x)));
    h = silu(n1.fwd(g, c1.fwd(g, h)));
    h = silu(n2.fwd(g, c2.fwd(g, h)));
    h = silu(n3.fwd(g, c3.fwd(g, h)));
    return fc_embed.fwd(g, mean_hw(h));
  }

  Var<T> logits(Graph<T>& g, Var<T> x) { return fc_class.fwd(g, silu(features(g, x))); }
};

using IdEncoder = IdEncoderT<float>;

using IdentityEmbedding = std::vector<float>;  // kIdEmbedDim, unit norm

// image -> unit-norm embedding (eval path, no tape kept)
inline IdentityEmbedding embed(IdEncoder& enc, const Image& img) {
  Graph<float> g;
  Var<float> f = enc.features(g, constant(g, image_to_tensor(img)));
  IdentityEmbedding e(f.val().data.begin(), f.val().data.end());
  double norm = 0.0;
  for (float v : e) norm += static_cast<double>(v) * v;
  norm = std::sqrt(std::max(norm, 1e-12));
  for (float& v : e) v = static_cast<float>(v / norm);
  return e;
}

// cosine similarity of two unit-norm embeddings
inline double id_similarity(const IdentityEmbedding& a, const IdentityEmbedding& b) {
  if (a.size() != static_cast<size_t>(kIdEmbedDim) || b.size() != a.size())
    throw ValidationError("id_similarity: embedding dim mismatch");
  double na = 0, nb = 0, dot = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
    dot += static_cast<double>(a[i]) * b[i];
  }
  if (std::abs(std::sqrt(na) - 1.0) > 1e-3 || std::abs(std::sqrt(nb) - 1.0) > 1e-3)
    throw ValidationError("id_similarity: embeddings must be unit norm");
  return dot;
}

// Learned linear map from one embedding to kIdTokens context tokens.
// Trained in stage 1b alongside the per-level K^i/V^i projections.
template <typename T>
struct TokenProjectorT {
  int d_ctx = kIdEmbedDim;
  LinearLayer<T> proj;

  void init(Rng& rng, int d_ctx_ = kIdEmbedDim) {
    d_ctx = d_ctx_;
    proj.init("idproj", kIdEmbedDim, kIdTokens * d_ctx, rng, /*bias=*/false);
  }

  ParamList<T> params() {
    ParamList<T> out;
    proj.collect(out);
    return out;
  }

  // (N, kIdEmbedDim) -> (N, kIdTokens, d_ctx)
  Var<T> fwd(Graph<T>& g, Var<T> e) {
    const int n = e.val().dim(0);
    return reshape(proj.fwd(g, e), {n, kIdTokens, d_ctx});
  }
};

using TokenProjector = TokenProjectorT<float>;

// embeddings (rows) -> token tensor usable as attention context
template <typename T>
Var<T> project_tokens(Graph<T>& g, TokenProjectorT<T>& p, const TensorT<T>& embeds) {
  if (embeds.ndim() != 2 || embeds.dim(1) != kIdEmbedDim)
    throw ValidationError("project_tokens: expected (N,128) embeddings");
  return p.fwd(g, constant(g, embeds));
}

}  // namespace rid
