#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "restorerid/ops.h"

namespace rid {

namespace init {

template <typename T>
TensorT<T> kaiming(std::vector<int> shape, int fan_in, Rng& rng) {
  double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  return TensorT<T>::randn(std::move(shape), rng, static_cast<T>(std));
}

}  // namespace init

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
struct LinearLayer {
  Param<T> w, b;
  bool has_bias = true;

  void init(const std::string& name, int in, int out, Rng& rng, bool bias = true,
            double wscale = 1.0) {
    has_bias = bias;
    w.name = name + ".w";
    w.value = init::kaiming<T>({out, in}, in, rng);
    if (wscale != 1.0)
      for (auto& x : w.value.data) x = static_cast<T>(x * wscale);
    if (bias) {
      b.name = name + ".b";
      b.value = TensorT<T>::zeros({out});
    }
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
  }

  Var<T> fwd(Graph<T>& g, Var<T> x) {
    return linear(x, leaf(g, w), has_bias ? leaf(g, b) : Var<T>{});
  }
};

template <typename T>
struct Conv2dLayer {
  Param<T> w, b;
  int stride = 1;
  int pad = -1;  // -1: same padding for odd kernels

  void init(const std::string& name, int cin, int cout, int k, Rng& rng,
            int stride_ = 1, double wscale = 1.0) {
    stride = stride_;
    w.name = name + ".w";
    w.value = init::kaiming<T>({cout, cin, k, k}, cin * k * k, rng);
    if (wscale != 1.0)
      for (auto& x : w.value.data) x = static_cast<T>(x * wscale);
    b.name = name + ".b";
    b.value = TensorT<T>::zeros({cout});
  }

  // zero weights, constant bias: used by identity-at-init adapter branches
  void init_zero(const std::string& name, int cin, int cout, int k, T bias_value) {
    w.name = name + ".w";
    w.value = TensorT<T>::zeros({cout, cin, k, k});
    b.name = name + ".b";
    b.value = TensorT<T>::full({cout}, bias_value);
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }

  Var<T> fwd(Graph<T>& g, Var<T> x) {
    return conv2d(x, leaf(g, w), leaf(g, b), stride, pad);
  }
};

template <typename T>
struct GroupNormLayer {
  Param<T> gamma, beta;
  int groups = 8;

  void init(const std::string& name, int channels, int groups_ = 8) {
    groups = groups_;
    gamma.name = name + ".gamma";
    gamma.value = TensorT<T>::full({channels}, T(1));
    beta.name = name + ".beta";
    beta.value = TensorT<T>::zeros({channels});
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  Var<T> fwd(Graph<T>& g, Var<T> x) {
    return group_norm(x, leaf(g, gamma), leaf(g, beta), groups);
  }
};

template <typename T>
struct LayerNormLayer {
  Param<T> gamma, beta;

  void init(const std::string& name, int dim) {
    gamma.name = name + ".gamma";
    gamma.value = TensorT<T>::full({dim}, T(1));
    beta.name = name + ".beta";
    beta.value = TensorT<T>::zeros({dim});
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  Var<T> fwd(Graph<T>& g, Var<T> x) {
    return layer_norm(x, leaf(g, gamma), leaf(g, beta));
  }
};

// ---------------------------------------------------------------- optimizer

template <typename T>
struct AdamW {
  double lr = 5e-5;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  int64_t t = 0;

  void step(const ParamList<T>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (Param<T>* p : params) {
      if (p->grad.empty()) continue;
      if (p->m.empty()) {
        p->m = TensorT<T>::zeros(p->value.shape);
        p->v = TensorT<T>::zeros(p->value.shape);
      }
      for (int64_t k = 0; k < p->value.numel(); ++k) {
        double gk = static_cast<double>(p->grad[k]);
        double m = beta1 * static_cast<double>(p->m[k]) + (1.0 - beta1) * gk;
        double v = beta2 * static_cast<double>(p->v[k]) + (1.0 - beta2) * gk * gk;
        p->m[k] = static_cast<T>(m);
        p->v[k] = static_cast<T>(v);
        double mhat = m / bc1, vhat = v / bc2;
        double upd = mhat / (std::sqrt(vhat) + eps) + weight_decay * static_cast<double>(p->value[k]);
        p->value[k] = static_cast<T>(static_cast<double>(p->value[k]) - lr * upd);
      }
    }
  }
};

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (Param<T>* p : params) p->zero_grad();
}

// FNV-1a over parameter bytes, for frozen-weight assertions
template <typename T>
uint64_t params_hash(const ParamList<T>& params) {
  uint64_t h = 1469598103934665603ull;
  for (const Param<T>* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data.data());
    size_t nb = p->value.data.size() * sizeof(T);
    for (size_t i = 0; i < nb; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace rid
