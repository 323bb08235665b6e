#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "restorerid/tensor.h"

namespace rid {

// Interleaved RGB image, values in [0,1].
struct Image {
  int h = 0, w = 0;
  std::vector<float> data;  // h*w*3

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), data(static_cast<size_t>(h_) * w_ * 3, 0.f) {}

  float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * w + x) * 3 + c]; }

  bool same_size(const Image& o) const { return h == o.h && w == o.w; }
};

Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);

// Baseline JPEG encode (4:4:4, no subsampling) to memory, then decode.
Image jpeg_roundtrip(const Image& img, int quality);

Image resize_bilinear(const Image& img, int out_h, int out_w);
Image gaussian_blur(const Image& img, double sigma);

// clamp to [0,1]
void clamp01(Image& img);

// (1,3,H,W) tensor in [-1,1] <-> image in [0,1]
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

// Rec.601 luma
std::vector<float> luma(const Image& img);

uint64_t image_hash(const Image& img);

}  // namespace rid
