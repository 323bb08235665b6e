#pragma once

#include <cmath>
#include <string>

#include "restorerid/image.h"
#include "restorerid/nn.h"

namespace rid {

// Deterministic conv autoencoder: 3x64x64 image in [-1,1] <-> 4x16x16 latent.
// `latent_scale` normalises encoder outputs to roughly unit variance; it is
// fitted after training and stored in checkpoint metadata.
template <typename T>
struct AutoencoderT {
  int base = 32;
  int latent_channels = 4;
  double latent_scale = 1.0;

  Conv2dLayer<T> e0, e1, e2, e3;
  GroupNormLayer<T> en0, en1, en2;
  Conv2dLayer<T> d0, d1, d2, d3;
  GroupNormLayer<T> dn0, dn1, dn2;

  void init(Rng& rng, int base_ = 32, int latent_channels_ = 4) {
    base = base_;
    latent_channels = latent_channels_;
    const int b = base;
    e0.init("ae.e0", 3, b, 3, rng);
    en0.init("ae.en0", b);
    e1.init("ae.e1", b, 2 * b, 3, rng, /*stride=*/2);
    en1.init("ae.en1", 2 * b);
    e2.init("ae.e2", 2 * b, 4 * b, 3, rng, /*stride=*/2);
    en2.init("ae.en2", 4 * b);
    e3.init("ae.e3", 4 * b, latent_channels, 3, rng);

    d0.init("ae.d0", latent_channels, 4 * b, 3, rng);
    dn0.init("ae.dn0", 4 * b);
    d1.init("ae.d1", 4 * b, 2 * b, 3, rng);
    dn1.init("ae.dn1", 2 * b);
    d2.init("ae.d2", 2 * b, b, 3, rng);
    dn2.init("ae.dn2", b);
    d3.init("ae.d3", b, 3, 3, rng);
  }

  ParamList<T> params() {
    ParamList<T> out;
    e0.collect(out); en0.collect(out);
    e1.collect(out); en1.collect(out);
    e2.collect(out); en2.collect(out);
    e3.collect(out);
    d0.collect(out); dn0.collect(out);
    d1.collect(out); dn1.collect(out);
    d2.collect(out); dn2.collect(out);
    d3.collect(out);
    return out;
  }

  // raw (unscaled) latent
  Var<T> encode(Graph<T>& g, Var<T> x) {
    Var<T> h = silu(en0.fwd(g, e0.fwd(g, x)));
    h = silu(en1.fwd(g, e1.fwd(g, h)));
    h = silu(en2.fwd(g, e2.fwd(g, h)));
    return e3.fwd(g, h);
  }

  // raw latent -> image tensor in [-1,1]
  Var<T> decode(Graph<T>& g, Var<T> z) {
    Var<T> h = silu(dn0.fwd(g, d0.fwd(g, z)));
    h = upsample_nearest2(h);
    h = silu(dn1.fwd(g, d1.fwd(g, h)));
    h = upsample_nearest2(h);
    h = silu(dn2.fwd(g, d2.fwd(g, h)));
    h = d3.fwd(g, h);
    // squash to [-1,1]: 2*sigmoid(h) - 1
    Var<T> ones = constant(g, TensorT<T>::full(h.val().shape, T(1)));
    return add_scaled(scale(sigmoid(h), 2.0), ones, -1.0);
  }

  // convenience: image -> scaled latent (value only, no tape kept by caller)
  Tensor encode_image(const Image& img) {
    if (img.h != 64 || img.w != 64)
      throw ValidationError("encode: expected a 64x64 image");
    Graph<float> g;
    Var<float> z = encode_f(g, constant(g, image_to_tensor(img)));
    Tensor out = z.val();
    for (auto& v : out.data) v = static_cast<float>(v * latent_scale);
    return out;
  }

  Image decode_latent(const Tensor& z_scaled) {
    if (z_scaled.shape != std::vector<int>{1, latent_channels, 16, 16})
      throw ValidationError("decode: latent shape mismatch");
    Tensor z = z_scaled;
    for (auto& v : z.data) v = static_cast<float>(v / latent_scale);
    Graph<float> g;
    Var<float> x = decode_f(g, constant(g, z));
    return tensor_to_image(x.val());
  }

 private:
  // only instantiated for T=float (runtime pipeline); gradcheck uses
  // encode/decode on TensorD directly.
  Var<float> encode_f(Graph<float>& g, Var<float> x) {
    static_assert(std::is_same_v<T, float>, "image helpers are float-only");
    return encode(g, x);
  }
  Var<float> decode_f(Graph<float>& g, Var<float> z) {
    static_assert(std::is_same_v<T, float>, "image helpers are float-only");
    return decode(g, z);
  }
};

using Autoencoder = AutoencoderT<float>;

}  // namespace rid
