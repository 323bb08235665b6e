#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "restorerid/gemm.h"
#include "restorerid/graph.h"

namespace rid {

template <typename T>
void acc_into(Graph<T>& g, int i, const TensorT<T>& gy) {
  TensorT<T>& d = g.grad(i);
  for (int64_t k = 0; k < d.numel(); ++k) d[k] += gy[k];
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>* g = a.g;
  if (a.val().shape != b.val().shape) throw ValidationError("add: shape mismatch");
  TensorT<T> out(a.val().shape);
  const TensorT<T>&av = a.val(), &bv = b.val();
  for (int64_t k = 0; k < out.numel(); ++k) out[k] = av[k] + bv[k];
  int id = g->next_id();
  int ai = a.id, bi = b.id;
  g->add(std::move(out), [g, id, ai, bi]() {
    const TensorT<T>& gy = g->grad(id);
    acc_into(*g, ai, gy);
    acc_into(*g, bi, gy);
  });
  return {g, id};
}

// a + alpha * b
template <typename T>
Var<T> add_scaled(Var<T> a, Var<T> b, double alpha) {
  Graph<T>* g = a.g;
  if (a.val().shape != b.val().shape) throw ValidationError("add_scaled: shape mismatch");
  TensorT<T> out(a.val().shape);
  const TensorT<T>&av = a.val(), &bv = b.val();
  const T al = static_cast<T>(alpha);
  for (int64_t k = 0; k < out.numel(); ++k) out[k] = av[k] + al * bv[k];
  int id = g->next_id();
  int ai = a.id, bi = b.id;
  g->add(std::move(out), [g, id, ai, bi, al]() {
    const TensorT<T>& gy = g->grad(id);
    acc_into(*g, ai, gy);
    TensorT<T>& db = g->grad(bi);
    for (int64_t k = 0; k < db.numel(); ++k) db[k] += al * gy[k];
  });
  return {g, id};
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>* g = a.g;
  if (a.val().shape != b.val().shape) throw ValidationError("mul: shape mismatch");
  TensorT<T> out(a.val().shape);
  const TensorT<T>&av = a.val(), &bv = b.val();
  for (int64_t k = 0; k < out.numel(); ++k) out[k] = av[k] * bv[k];
  int id = g->next_id();
  int ai = a.id, bi = b.id;
  g->add(std::move(out), [g, id, ai, bi]() {
    const TensorT<T>& gy = g->grad(id);
    const TensorT<T>&av = g->val(ai), &bv = g->val(bi);
    TensorT<T>& da = g->grad(ai);
    TensorT<T>& db = g->grad(bi);
    for (int64_t k = 0; k < gy.numel(); ++k) {
      da[k] += gy[k] * bv[k];
      db[k] += gy[k] * av[k];
    }
  });
  return {g, id};
}

template <typename T>
Var<T> scale(Var<T> a, double c) {
  Graph<T>* g = a.g;
  TensorT<T> out(a.val().shape);
  const TensorT<T>& av = a.val();
  const T cc = static_cast<T>(c);
  for (int64_t k = 0; k < out.numel(); ++k) out[k] = cc * av[k];
  int id = g->next_id();
  int ai = a.id;
  g->add(std::move(out), [g, id, ai, cc]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& da = g->grad(ai);
    for (int64_t k = 0; k < gy.numel(); ++k) da[k] += cc * gy[k];
  });
  return {g, id};
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Graph<T>* g = a.g;
  TensorT<T> out(a.val().shape);
  const TensorT<T>& av = a.val();
  for (int64_t k = 0; k < out.numel(); ++k)
    out[k] = T(1) / (T(1) + std::exp(-av[k]));
  int id = g->next_id();
  int ai = a.id;
  g->add(std::move(out), [g, id, ai]() {
    const TensorT<T>& gy = g->grad(id);
    const TensorT<T>& y = g->val(id);
    TensorT<T>& da = g->grad(ai);
    for (int64_t k = 0; k < gy.numel(); ++k) da[k] += gy[k] * y[k] * (T(1) - y[k]);
  });
  return {g, id};
}

template <typename T>
Var<T> silu(Var<T> a) {
  Graph<T>* g = a.g;
  TensorT<T> out(a.val().shape);
  const TensorT<T>& av = a.val();
  for (int64_t k = 0; k < out.numel(); ++k) {
    T s = T(1) / (T(1) + std::exp(-av[k]));
    out[k] = av[k] * s;
  }
  int id = g->next_id();
  int ai = a.id;
  g->add(std::move(out), [g, id, ai]() {
    const TensorT<T>& gy = g->grad(id);
    const TensorT<T>& x = g->val(ai);
    TensorT<T>& da = g->grad(ai);
    for (int64_t k = 0; k < gy.numel(); ++k) {
      T s = T(1) / (T(1) + std::exp(-x[k]));
      da[k] += gy[k] * s * (T(1) + x[k] * (T(1) - s));
    }
  });
  return {g, id};
}

template <typename T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
  Graph<T>* g = a.g;
  TensorT<T> out = a.val().reshaped(shape);
  int id = g->next_id();
  int ai = a.id;
  g->add(std::move(out), [g, id, ai]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& da = g->grad(ai);
    for (int64_t k = 0; k < gy.numel(); ++k) da[k] += gy[k];
  });
  return {g, id};
}

// ---------------------------------------------------------------- linear

// x: [..., IN] -> [..., OUT]; w: [OUT, IN]; b: [OUT] or invalid Var
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b = {}) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const TensorT<T>& wv = w.val();
  const int in = xv.shape.back();
  const int out_dim = wv.dim(0);
  if (wv.dim(1) != in) throw ConfigError("linear: weight/input dim mismatch");
  const int m = static_cast<int>(xv.numel() / in);

  std::vector<int> oshape = xv.shape;
  oshape.back() = out_dim;
  TensorT<T> out(oshape);
  gemm(false, true, m, out_dim, in, T(1), xv.ptr(), in, wv.ptr(), in, T(0), out.ptr(), out_dim);
  if (b.valid()) {
    const TensorT<T>& bv = b.val();
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < out_dim; ++c) out[static_cast<int64_t>(r) * out_dim + c] += bv[c];
  }
  int id = g->next_id();
  int xi = x.id, wi = w.id, bi = b.valid() ? b.id : -1;
  g->add(std::move(out), [g, id, xi, wi, bi, m, in, out_dim]() {
    const TensorT<T>& gy = g->grad(id);
    const TensorT<T>& xv = g->val(xi);
    const TensorT<T>& wv = g->val(wi);
    TensorT<T>& dx = g->grad(xi);
    TensorT<T>& dw = g->grad(wi);
    gemm(false, false, m, in, out_dim, T(1), gy.ptr(), out_dim, wv.ptr(), in, T(1), dx.ptr(), in);
    gemm(true, false, out_dim, in, m, T(1), gy.ptr(), out_dim, xv.ptr(), in, T(1), dw.ptr(), in);
    if (bi >= 0) {
      TensorT<T>& db = g->grad(bi);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < out_dim; ++c) db[c] += gy[static_cast<int64_t>(r) * out_dim + c];
    }
  });
  return {g, id};
}

// ---------------------------------------------------------------- conv2d

namespace detail {

template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, T* col) {
  // col: [c*kh*kw, oh*ow]
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* dst = col + (static_cast<int64_t>(ci) * kh * kw + ki * kw + kj) * oh * ow;
        for (int oi = 0; oi < oh; ++oi) {
          int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) {
            for (int oj = 0; oj < ow; ++oj) dst[oi * ow + oj] = T(0);
            continue;
          }
          const T* src = x + (static_cast<int64_t>(ci) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            int jj = oj * stride + kj - pad;
            dst[oi * ow + oj] = (jj >= 0 && jj < w) ? src[jj] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* col, int c, int h, int w, int kh, int kw, int stride,
                int pad, int oh, int ow, T* x) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* src = col + (static_cast<int64_t>(ci) * kh * kw + ki * kw + kj) * oh * ow;
        for (int oi = 0; oi < oh; ++oi) {
          int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) continue;
          T* dst = x + (static_cast<int64_t>(ci) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            int jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < w) dst[jj] += src[oi * ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: [N,Cin,H,W]; w: [Cout,Cin,kh,kw]; b: [Cout] or invalid
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b = {}, int stride = 1, int pad = -1) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const TensorT<T>& wv = w.val();
  const int n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), ww = xv.dim(3);
  const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != cin) throw ConfigError("conv2d: channel mismatch");
  if (pad < 0) pad = kh / 2;
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (ww + 2 * pad - kw) / stride + 1;
  const int ck = cin * kh * kw;
  const int hw = oh * ow;

  TensorT<T> out({n, cout, oh, ow});
  std::vector<T> col(static_cast<size_t>(ck) * hw);
  for (int i = 0; i < n; ++i) {
    detail::im2col(xv.ptr() + static_cast<int64_t>(i) * cin * h * ww, cin, h, ww,
                   kh, kw, stride, pad, oh, ow, col.data());
    gemm(false, false, cout, hw, ck, T(1), wv.ptr(), ck, col.data(), hw, T(0),
         out.ptr() + static_cast<int64_t>(i) * cout * hw, hw);
  }
  if (b.valid()) {
    const TensorT<T>& bv = b.val();
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < cout; ++c) {
        T* dst = out.ptr() + (static_cast<int64_t>(i) * cout + c) * hw;
        for (int k = 0; k < hw; ++k) dst[k] += bv[c];
      }
  }

  int id = g->next_id();
  int xi = x.id, wi = w.id, bi = b.valid() ? b.id : -1;
  g->add(std::move(out), [g, id, xi, wi, bi, n, cin, h, ww, cout, kh, kw, stride,
                          pad, oh, ow, ck, hw]() {
    const TensorT<T>& gy = g->grad(id);
    const TensorT<T>& xv = g->val(xi);
    const TensorT<T>& wv = g->val(wi);
    TensorT<T>& dx = g->grad(xi);
    TensorT<T>& dw = g->grad(wi);
    std::vector<T> col(static_cast<size_t>(ck) * hw);
    std::vector<T> dcol(static_cast<size_t>(ck) * hw);
    for (int i = 0; i < n; ++i) {
      const T* gyp = gy.ptr() + static_cast<int64_t>(i) * cout * hw;
      // dW += gy_i * col_iᵀ
      detail::im2col(xv.ptr() + static_cast<int64_t>(i) * cin * h * ww, cin, h,
                     ww, kh, kw, stride, pad, oh, ow, col.data());
      gemm(false, true, cout, ck, hw, T(1), gyp, hw, col.data(), hw, T(1), dw.ptr(), ck);
      // dcol = Wᵀ * gy_i ; dX_i += col2im(dcol)
      gemm(true, false, ck, hw, cout, T(1), wv.ptr(), ck, gyp, hw, T(0), dcol.data(), hw);
      detail::col2im_acc(dcol.data(), cin, h, ww, kh, kw, stride, pad, oh, ow,
                         dx.ptr() + static_cast<int64_t>(i) * cin * h * ww);
    }
    if (bi >= 0) {
      TensorT<T>& db = g->grad(bi);
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < cout; ++c) {
          const T* gyp = gy.ptr() + (static_cast<int64_t>(i) * cout + c) * hw;
          T s = T(0);
          for (int k = 0; k < hw; ++k) s += gyp[k];
          db[c] += s;
        }
    }
  });
  return {g, id};
}

// ---------------------------------------------------------------- spatial

template <typename T>
Var<T> upsample_nearest2(Var<T> x) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  TensorT<T> out({n, c, h * 2, w * 2});
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h * 2; ++y)
        for (int xx = 0; xx < w * 2; ++xx)
          out.at(i, ci, y, xx) = xv.at(i, ci, y / 2, xx / 2);
  int id = g->next_id();
  int xi = x.id;
  g->add(std::move(out), [g, id, xi, n, c, h, w]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& dx = g->grad(xi);
    for (int i = 0; i < n; ++i)
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h * 2; ++y)
          for (int xx = 0; xx < w * 2; ++xx)
            dx.at(i, ci, y / 2, xx / 2) += gy.at(i, ci, y, xx);
  });
  return {g, id};
}

// (N,C,H,W) -> (N,C) spatial mean
template <typename T>
Var<T> mean_hw(Var<T> x) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  TensorT<T> out({n, c});
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci) {
      const T* p = xv.ptr() + (static_cast<int64_t>(i) * c + ci) * hw;
      T s = T(0);
      for (int k = 0; k < hw; ++k) s += p[k];
      out[static_cast<int64_t>(i) * c + ci] = s / static_cast<T>(hw);
    }
  int id = g->next_id();
  int xi = x.id;
  g->add(std::move(out), [g, id, xi, n, c, hw]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& dx = g->grad(xi);
    for (int i = 0; i < n; ++i)
      for (int ci = 0; ci < c; ++ci) {
        T v = gy[static_cast<int64_t>(i) * c + ci] / static_cast<T>(hw);
        T* p = dx.ptr() + (static_cast<int64_t>(i) * c + ci) * hw;
        for (int k = 0; k < hw; ++k) p[k] += v;
      }
  });
  return {g, id};
}

// x: (N,C,H,W) + v: (N,C) broadcast over spatial dims
template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> v) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const TensorT<T>& vv = v.val();
  const int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (vv.dim(0) != n || vv.dim(1) != c) throw ValidationError("add_channel_bias: shape mismatch");
  TensorT<T> out(xv.shape);
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci) {
      const T b = vv[static_cast<int64_t>(i) * c + ci];
      const T* p = xv.ptr() + (static_cast<int64_t>(i) * c + ci) * hw;
      T* q = out.ptr() + (static_cast<int64_t>(i) * c + ci) * hw;
      for (int k = 0; k < hw; ++k) q[k] = p[k] + b;
    }
  int id = g->next_id();
  int xi = x.id, vi = v.id;
  g->add(std::move(out), [g, id, xi, vi, n, c, hw]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& dx = g->grad(xi);
    TensorT<T>& dv = g->grad(vi);
    for (int64_t k = 0; k < gy.numel(); ++k) dx[k] += gy[k];
    for (int i = 0; i < n; ++i)
      for (int ci = 0; ci < c; ++ci) {
        const T* p = gy.ptr() + (static_cast<int64_t>(i) * c + ci) * hw;
        T s = T(0);
        for (int k = 0; k < hw; ++k) s += p[k];
        dv[static_cast<int64_t>(i) * c + ci] += s;
      }
  });
  return {g, id};
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  Graph<T>* g = a.g;
  const TensorT<T>& av = a.val();
  const TensorT<T>& bv = b.val();
  const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
  if (bv.dim(0) != n || bv.dim(2) != h || bv.dim(3) != w)
    throw ValidationError("concat_channels: shape mismatch");
  TensorT<T> out({n, ca + cb, h, w});
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::copy(av.ptr() + i * ca * hw, av.ptr() + (i + 1) * ca * hw,
              out.ptr() + static_cast<int64_t>(i) * (ca + cb) * hw);
    std::copy(bv.ptr() + i * cb * hw, bv.ptr() + (i + 1) * cb * hw,
              out.ptr() + static_cast<int64_t>(i) * (ca + cb) * hw + ca * hw);
  }
  int id = g->next_id();
  int ai = a.id, bi = b.id;
  g->add(std::move(out), [g, id, ai, bi, n, ca, cb, hw]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& da = g->grad(ai);
    TensorT<T>& db = g->grad(bi);
    for (int i = 0; i < n; ++i) {
      const T* src = gy.ptr() + static_cast<int64_t>(i) * (ca + cb) * hw;
      for (int64_t k = 0; k < ca * hw; ++k) da[i * ca * hw + k] += src[k];
      for (int64_t k = 0; k < cb * hw; ++k) db[i * cb * hw + k] += src[ca * hw + k];
    }
  });
  return {g, id};
}

// (N,C,H,W) <-> (N,H*W,C) token views for attention blocks
template <typename T>
Var<T> nchw_to_tokens(Var<T> x) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int t = h * w;
  TensorT<T> out({n, t, c});
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci) {
      const T* p = xv.ptr() + (static_cast<int64_t>(i) * c + ci) * t;
      for (int k = 0; k < t; ++k) out[(static_cast<int64_t>(i) * t + k) * c + ci] = p[k];
    }
  int id = g->next_id();
  int xi = x.id;
  g->add(std::move(out), [g, id, xi, n, c, t]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& dx = g->grad(xi);
    for (int i = 0; i < n; ++i)
      for (int ci = 0; ci < c; ++ci) {
        T* p = dx.ptr() + (static_cast<int64_t>(i) * c + ci) * t;
        for (int k = 0; k < t; ++k) p[k] += gy[(static_cast<int64_t>(i) * t + k) * c + ci];
      }
  });
  return {g, id};
}

template <typename T>
Var<T> tokens_to_nchw(Var<T> x, int h, int w) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const int n = xv.dim(0), t = xv.dim(1), c = xv.dim(2);
  if (t != h * w) throw ValidationError("tokens_to_nchw: token count mismatch");
  TensorT<T> out({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci) {
      T* p = out.ptr() + (static_cast<int64_t>(i) * c + ci) * t;
      for (int k = 0; k < t; ++k) p[k] = xv[(static_cast<int64_t>(i) * t + k) * c + ci];
    }
  int id = g->next_id();
  int xi = x.id;
  g->add(std::move(out), [g, id, xi, n, c, t]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& dx = g->grad(xi);
    for (int i = 0; i < n; ++i)
      for (int ci = 0; ci < c; ++ci) {
        const T* p = gy.ptr() + (static_cast<int64_t>(i) * c + ci) * t;
        for (int k = 0; k < t; ++k) dx[(static_cast<int64_t>(i) * t + k) * c + ci] += p[k];
      }
  });
  return {g, id};
}

// ---------------------------------------------------------------- norms

// x: (N,C,H,W), gamma/beta: (C); normalizes over each (group x H x W) slice
template <typename T>
Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, int groups, double eps = 1e-5) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (c % groups != 0) throw ConfigError("group_norm: channels not divisible by groups");
  const int cg = c / groups;
  const int64_t m = static_cast<int64_t>(cg) * hw;

  TensorT<T> out(xv.shape);
  auto stats = std::make_shared<TensorT<T>>(TensorT<T>({n, groups, 2}));  // mean, inv_std
  const TensorT<T>& gv = gamma.val();
  const TensorT<T>& bv = beta.val();
  for (int i = 0; i < n; ++i)
    for (int gr = 0; gr < groups; ++gr) {
      const T* p = xv.ptr() + (static_cast<int64_t>(i) * c + gr * cg) * hw;
      T mean = T(0);
      for (int64_t k = 0; k < m; ++k) mean += p[k];
      mean /= static_cast<T>(m);
      T var = T(0);
      for (int64_t k = 0; k < m; ++k) {
        T d = p[k] - mean;
        var += d * d;
      }
      var /= static_cast<T>(m);
      T istd = T(1) / std::sqrt(var + static_cast<T>(eps));
      (*stats)[(static_cast<int64_t>(i) * groups + gr) * 2 + 0] = mean;
      (*stats)[(static_cast<int64_t>(i) * groups + gr) * 2 + 1] = istd;
      T* q = out.ptr() + (static_cast<int64_t>(i) * c + gr * cg) * hw;
      for (int ci = 0; ci < cg; ++ci) {
        const T ga = gv[gr * cg + ci], be = bv[gr * cg + ci];
        for (int k = 0; k < hw; ++k) {
          int64_t idx = static_cast<int64_t>(ci) * hw + k;
          q[idx] = (p[idx] - mean) * istd * ga + be;
        }
      }
    }

  int id = g->next_id();
  int xi = x.id, gi = gamma.id, bi = beta.id;
  g->add(std::move(out), [g, id, xi, gi, bi, stats, n, c, cg, hw, groups, m]() {
    const TensorT<T>& gy = g->grad(id);
    const TensorT<T>& xv = g->val(xi);
    const TensorT<T>& gv = g->val(gi);
    TensorT<T>& dx = g->grad(xi);
    TensorT<T>& dgamma = g->grad(gi);
    TensorT<T>& dbeta = g->grad(bi);
    std::vector<T> xhat(static_cast<size_t>(m));
    std::vector<T> dxhat(static_cast<size_t>(m));
    for (int i = 0; i < n; ++i)
      for (int gr = 0; gr < groups; ++gr) {
        const int64_t base = (static_cast<int64_t>(i) * c + gr * cg) * hw;
        const T mean = (*stats)[(static_cast<int64_t>(i) * groups + gr) * 2 + 0];
        const T istd = (*stats)[(static_cast<int64_t>(i) * groups + gr) * 2 + 1];
        const T* p = xv.ptr() + base;
        const T* gyp = gy.ptr() + base;
        T s1 = T(0), s2 = T(0);
        for (int ci = 0; ci < cg; ++ci) {
          const T ga = gv[gr * cg + ci];
          T dg = T(0), db = T(0);
          for (int k = 0; k < hw; ++k) {
            int64_t idx = static_cast<int64_t>(ci) * hw + k;
            T xh = (p[idx] - mean) * istd;
            xhat[static_cast<size_t>(idx)] = xh;
            T dxh = gyp[idx] * ga;
            dxhat[static_cast<size_t>(idx)] = dxh;
            s1 += dxh;
            s2 += dxh * xh;
            dg += gyp[idx] * xh;
            db += gyp[idx];
          }
          dgamma[gr * cg + ci] += dg;
          dbeta[gr * cg + ci] += db;
        }
        s1 /= static_cast<T>(m);
        s2 /= static_cast<T>(m);
        T* dxp = dx.ptr() + base;
        for (int64_t k = 0; k < m; ++k)
          dxp[k] += istd * (dxhat[static_cast<size_t>(k)] - s1 -
                            xhat[static_cast<size_t>(k)] * s2);
      }
  });
  return {g, id};
}

// x: (N,T,D), gamma/beta: (D); normalizes over the last dim
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const int d = xv.shape.back();
  const int64_t rows = xv.numel() / d;

  TensorT<T> out(xv.shape);
  auto stats = std::make_shared<TensorT<T>>(TensorT<T>({static_cast<int>(rows), 2}));
  const TensorT<T>& gv = gamma.val();
  const TensorT<T>& bv = beta.val();
  for (int64_t r = 0; r < rows; ++r) {
    const T* p = xv.ptr() + r * d;
    T mean = T(0);
    for (int k = 0; k < d; ++k) mean += p[k];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (int k = 0; k < d; ++k) {
      T dd = p[k] - mean;
      var += dd * dd;
    }
    var /= static_cast<T>(d);
    T istd = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*stats)[r * 2 + 0] = mean;
    (*stats)[r * 2 + 1] = istd;
    T* q = out.ptr() + r * d;
    for (int k = 0; k < d; ++k) q[k] = (p[k] - mean) * istd * gv[k] + bv[k];
  }

  int id = g->next_id();
  int xi = x.id, gi = gamma.id, bi = beta.id;
  g->add(std::move(out), [g, id, xi, gi, bi, stats, rows, d]() {
    const TensorT<T>& gy = g->grad(id);
    const TensorT<T>& xv = g->val(xi);
    const TensorT<T>& gv = g->val(gi);
    TensorT<T>& dx = g->grad(xi);
    TensorT<T>& dgamma = g->grad(gi);
    TensorT<T>& dbeta = g->grad(bi);
    for (int64_t r = 0; r < rows; ++r) {
      const T* p = xv.ptr() + r * d;
      const T* gyp = gy.ptr() + r * d;
      const T mean = (*stats)[r * 2 + 0];
      const T istd = (*stats)[r * 2 + 1];
      T s1 = T(0), s2 = T(0);
      for (int k = 0; k < d; ++k) {
        T xh = (p[k] - mean) * istd;
        T dxh = gyp[k] * gv[k];
        s1 += dxh;
        s2 += dxh * xh;
        dgamma[k] += gyp[k] * xh;
        dbeta[k] += gyp[k];
      }
      s1 /= static_cast<T>(d);
      s2 /= static_cast<T>(d);
      T* dxp = dx.ptr() + r * d;
      for (int k = 0; k < d; ++k) {
        T xh = (p[k] - mean) * istd;
        dxp[k] += istd * (gyp[k] * gv[k] - s1 - xh * s2);
      }
    }
  });
  return {g, id};
}

// ---------------------------------------------------------------- attention

// Scaled dot-product multi-head attention.
// q: (N,Tq,D), k/v: (N,Tk,D), D % heads == 0. If probe != nullptr the softmax
// maps (N,heads,Tq,Tk) are copied out for inspection.
template <typename T>
Var<T> mha(Var<T> q, Var<T> k, Var<T> v, int heads, TensorT<T>* probe = nullptr) {
  Graph<T>* g = q.g;
  const TensorT<T>& qv = q.val();
  const TensorT<T>& kv = k.val();
  const TensorT<T>& vv = v.val();
  const int n = qv.dim(0), tq = qv.dim(1), d = qv.dim(2);
  const int tk = kv.dim(1);
  if (kv.dim(2) != d || vv.dim(2) != d || vv.dim(1) != tk || kv.dim(0) != n || vv.dim(0) != n)
    throw ValidationError("mha: shape mismatch");
  if (d % heads != 0) throw ConfigError("mha: dim not divisible by heads");
  const int dh = d / heads;
  const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  // head-split copies, contiguous per (n,head)
  auto split = [&](const TensorT<T>& src, int t) {
    TensorT<T> dst({n, heads, t, dh});
    for (int i = 0; i < n; ++i)
      for (int hh = 0; hh < heads; ++hh)
        for (int tt = 0; tt < t; ++tt)
          std::copy(src.ptr() + (static_cast<int64_t>(i) * t + tt) * d + hh * dh,
                    src.ptr() + (static_cast<int64_t>(i) * t + tt) * d + hh * dh + dh,
                    dst.ptr() + ((static_cast<int64_t>(i) * heads + hh) * t + tt) * dh);
    return dst;
  };
  auto qh = std::make_shared<TensorT<T>>(split(qv, tq));
  auto kh = std::make_shared<TensorT<T>>(split(kv, tk));
  auto vh = std::make_shared<TensorT<T>>(split(vv, tk));
  auto attn = std::make_shared<TensorT<T>>(TensorT<T>({n, heads, tq, tk}));

  TensorT<T> out({n, tq, d});
  std::vector<T> oh(static_cast<size_t>(tq) * dh);
  for (int i = 0; i < n; ++i)
    for (int hh = 0; hh < heads; ++hh) {
      const T* qp = qh->ptr() + ((static_cast<int64_t>(i) * heads + hh) * tq) * dh;
      const T* kp = kh->ptr() + ((static_cast<int64_t>(i) * heads + hh) * tk) * dh;
      const T* vp = vh->ptr() + ((static_cast<int64_t>(i) * heads + hh) * tk) * dh;
      T* ap = attn->ptr() + ((static_cast<int64_t>(i) * heads + hh) * tq) * tk;
      gemm(false, true, tq, tk, dh, sc, qp, dh, kp, dh, T(0), ap, tk);
      for (int r = 0; r < tq; ++r) {
        T* row = ap + static_cast<int64_t>(r) * tk;
        T mx = row[0];
        for (int cc = 1; cc < tk; ++cc) mx = std::max(mx, row[cc]);
        T sum = T(0);
        for (int cc = 0; cc < tk; ++cc) {
          row[cc] = std::exp(row[cc] - mx);
          sum += row[cc];
        }
        for (int cc = 0; cc < tk; ++cc) row[cc] /= sum;
      }
      gemm(false, false, tq, dh, tk, T(1), ap, tk, vp, dh, T(0), oh.data(), dh);
      for (int tt = 0; tt < tq; ++tt)
        std::copy(oh.data() + static_cast<int64_t>(tt) * dh,
                  oh.data() + static_cast<int64_t>(tt) * dh + dh,
                  out.ptr() + (static_cast<int64_t>(i) * tq + tt) * d + hh * dh);
    }
  if (probe) *probe = *attn;

  int id = g->next_id();
  int qi = q.id, ki = k.id, vi = v.id;
  g->add(std::move(out), [g, id, qi, ki, vi, qh, kh, vh, attn, n, heads, tq, tk,
                          d, dh, sc]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& dq = g->grad(qi);
    TensorT<T>& dk = g->grad(ki);
    TensorT<T>& dv = g->grad(vi);
    std::vector<T> goh(static_cast<size_t>(tq) * dh);
    std::vector<T> da(static_cast<size_t>(tq) * tk);
    std::vector<T> ds(static_cast<size_t>(tq) * tk);
    std::vector<T> dqh(static_cast<size_t>(tq) * dh);
    std::vector<T> dkh(static_cast<size_t>(tk) * dh);
    std::vector<T> dvh(static_cast<size_t>(tk) * dh);
    for (int i = 0; i < n; ++i)
      for (int hh = 0; hh < heads; ++hh) {
        const T* qp = qh->ptr() + ((static_cast<int64_t>(i) * heads + hh) * tq) * dh;
        const T* kp = kh->ptr() + ((static_cast<int64_t>(i) * heads + hh) * tk) * dh;
        const T* vp = vh->ptr() + ((static_cast<int64_t>(i) * heads + hh) * tk) * dh;
        const T* ap = attn->ptr() + ((static_cast<int64_t>(i) * heads + hh) * tq) * tk;
        for (int tt = 0; tt < tq; ++tt)
          std::copy(gy.ptr() + (static_cast<int64_t>(i) * tq + tt) * d + hh * dh,
                    gy.ptr() + (static_cast<int64_t>(i) * tq + tt) * d + hh * dh + dh,
                    goh.data() + static_cast<int64_t>(tt) * dh);
        // dV = Aᵀ·dO ; dA = dO·Vᵀ
        gemm(true, false, tk, dh, tq, T(1), ap, tk, goh.data(), dh, T(0), dvh.data(), dh);
        gemm(false, true, tq, tk, dh, T(1), goh.data(), dh, vp, dh, T(0), da.data(), tk);
        // dS = A ∘ (dA - rowsum(dA ∘ A))
        for (int r = 0; r < tq; ++r) {
          const T* arow = ap + static_cast<int64_t>(r) * tk;
          const T* darow = da.data() + static_cast<int64_t>(r) * tk;
          T dot = T(0);
          for (int cc = 0; cc < tk; ++cc) dot += darow[cc] * arow[cc];
          T* dsrow = ds.data() + static_cast<int64_t>(r) * tk;
          for (int cc = 0; cc < tk; ++cc) dsrow[cc] = arow[cc] * (darow[cc] - dot);
        }
        // dQ = sc·dS·K ; dK = sc·dSᵀ·Q
        gemm(false, false, tq, dh, tk, sc, ds.data(), tk, kp, dh, T(0), dqh.data(), dh);
        gemm(true, false, tk, dh, tq, sc, ds.data(), tk, qp, dh, T(0), dkh.data(), dh);
        for (int tt = 0; tt < tq; ++tt)
          for (int cc = 0; cc < dh; ++cc)
            dq[(static_cast<int64_t>(i) * tq + tt) * d + hh * dh + cc] +=
                dqh[static_cast<size_t>(tt) * dh + cc];
        for (int tt = 0; tt < tk; ++tt)
          for (int cc = 0; cc < dh; ++cc) {
            dk[(static_cast<int64_t>(i) * tk + tt) * d + hh * dh + cc] +=
                dkh[static_cast<size_t>(tt) * dh + cc];
            dv[(static_cast<int64_t>(i) * tk + tt) * d + hh * dh + cc] +=
                dvh[static_cast<size_t>(tt) * dh + cc];
          }
      }
  });
  return {g, id};
}

// (T,D) -> (N,T,D), same rows for every batch element
template <typename T>
Var<T> broadcast_batch(Var<T> x, int n) {
  Graph<T>* g = x.g;
  const TensorT<T>& xv = x.val();
  const int t = xv.dim(0), d = xv.dim(1);
  TensorT<T> out({n, t, d});
  for (int i = 0; i < n; ++i)
    std::copy(xv.ptr(), xv.ptr() + static_cast<int64_t>(t) * d,
              out.ptr() + static_cast<int64_t>(i) * t * d);
  int id = g->next_id();
  int xi = x.id;
  g->add(std::move(out), [g, id, xi, n, t, d]() {
    const TensorT<T>& gy = g->grad(id);
    TensorT<T>& dx = g->grad(xi);
    for (int i = 0; i < n; ++i)
      for (int64_t k = 0; k < static_cast<int64_t>(t) * d; ++k)
        dx[k] += gy[static_cast<int64_t>(i) * t * d + k];
  });
  return {g, id};
}

// ---------------------------------------------------------------- losses

// mean squared error against a constant target
template <typename T>
Var<T> mse(Var<T> pred, const TensorT<T>& target) {
  Graph<T>* g = pred.g;
  const TensorT<T>& pv = pred.val();
  if (pv.shape != target.shape) throw ValidationError("mse: shape mismatch");
  const int64_t m = pv.numel();
  T loss = T(0);
  for (int64_t k = 0; k < m; ++k) {
    T d = pv[k] - target[k];
    loss += d * d;
  }
  loss /= static_cast<T>(m);
  int id = g->next_id();
  int pi = pred.id;
  auto tgt = std::make_shared<TensorT<T>>(target);
  g->add(TensorT<T>::full({1}, loss), [g, id, pi, tgt, m]() {
    const T gy = g->grad(id)[0];
    const TensorT<T>& pv = g->val(pi);
    TensorT<T>& dp = g->grad(pi);
    const T c = gy * T(2) / static_cast<T>(m);
    for (int64_t k = 0; k < m; ++k) dp[k] += c * (pv[k] - (*tgt)[k]);
  });
  return {g, id};
}

// mean over all elements of x²  (activation penalties)
template <typename T>
Var<T> mean_square(Var<T> x) {
  return mse(x, TensorT<T>::zeros(x.val().shape));
}

// logits: (N,K), labels: size N; mean cross-entropy with softmax
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels) {
  Graph<T>* g = logits.g;
  const TensorT<T>& lv = logits.val();
  const int n = lv.dim(0), kk = lv.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw ValidationError("cross_entropy: label count mismatch");
  auto probs = std::make_shared<TensorT<T>>(TensorT<T>({n, kk}));
  T loss = T(0);
  for (int i = 0; i < n; ++i) {
    const T* p = lv.ptr() + static_cast<int64_t>(i) * kk;
    T mx = p[0];
    for (int c = 1; c < kk; ++c) mx = std::max(mx, p[c]);
    T sum = T(0);
    for (int c = 0; c < kk; ++c) {
      T e = std::exp(p[c] - mx);
      (*probs)[static_cast<int64_t>(i) * kk + c] = e;
      sum += e;
    }
    for (int c = 0; c < kk; ++c) (*probs)[static_cast<int64_t>(i) * kk + c] /= sum;
    loss -= std::log(std::max((*probs)[static_cast<int64_t>(i) * kk + labels[i]],
                              static_cast<T>(1e-30)));
  }
  loss /= static_cast<T>(n);
  int id = g->next_id();
  int li = logits.id;
  auto lab = std::make_shared<std::vector<int>>(labels);
  g->add(TensorT<T>::full({1}, loss), [g, id, li, probs, lab, n, kk]() {
    const T gy = g->grad(id)[0];
    TensorT<T>& dl = g->grad(li);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < kk; ++c) {
        T d = (*probs)[static_cast<int64_t>(i) * kk + c] - (c == (*lab)[i] ? T(1) : T(0));
        dl[static_cast<int64_t>(i) * kk + c] += gy * d / static_cast<T>(n);
      }
  });
  return {g, id};
}

}  // namespace rid
