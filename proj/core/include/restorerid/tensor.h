#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

#include "restorerid/errors.h"
#include "restorerid/rng.h"

namespace rid {

// Dense row-major tensor. Layout conventions used throughout:
//   images/latents/features: (N, C, H, W)
//   token sequences:         (N, T, D)
//   matrices:                (rows, cols)
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool empty() const { return data.empty(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // 4-d accessor for NCHW tensors
  T& at(int n, int c, int h, int w) {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at(int n, int c, int h, int w) const {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  TensorT reshaped(std::vector<int> s) const {
    if (numel_of(s) != numel()) throw ValidationError("reshape: element count mismatch");
    TensorT out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

  static TensorT full(std::vector<int> s, T v) {
    TensorT t(std::move(s));
    t.fill(v);
    return t;
  }

  static TensorT randn(std::vector<int> s, Rng& rng, T stddev = T(1)) {
    TensorT t(std::move(s));
    for (auto& x : t.data) x = static_cast<T>(rng.normal() * static_cast<double>(stddev));
    return t;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
bool same_shape(const TensorT<T>& a, const TensorT<T>& b) {
  return a.shape == b.shape;
}

}  // namespace rid
