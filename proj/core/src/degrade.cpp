#include "restorerid/degrade.h"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "restorerid/errors.h"

using nlohmann::json;

namespace rid {

namespace {

constexpr double kGamma = 2.2;

void validate_pass(const DegradePass& p) {
  if (p.blur_sigma < 0) throw ValidationError("recipe: negative blur_sigma");
  if (p.down_scale <= 0 || p.down_scale > 1.0)
    throw ValidationError("recipe: down_scale outside (0,1]");
  if (p.noise_sigma_read < 0 || p.noise_sigma_shot < 0)
    throw ValidationError("recipe: negative noise sigma");
  if (p.jpeg_quality < 10 || p.jpeg_quality > 100)
    throw ValidationError("recipe: jpeg_quality outside [10,100]");
}

}  // namespace

void DegradationRecipe::validate() const {
  validate_pass(pass[0]);
  validate_pass(pass[1]);
}

std::string DegradationRecipe::to_json() const {
  json j;
  j["seed"] = seed;
  for (int i = 0; i < 2; ++i) {
    j["pass"][i] = {{"blur_sigma", pass[i].blur_sigma},
                    {"down_scale", pass[i].down_scale},
                    {"noise_sigma_read", pass[i].noise_sigma_read},
                    {"noise_sigma_shot", pass[i].noise_sigma_shot},
                    {"jpeg_quality", pass[i].jpeg_quality}};
  }
  return j.dump();
}

DegradationRecipe DegradationRecipe::from_json(const std::string& text) {
  json j = json::parse(text);
  DegradationRecipe r;
  r.seed = j.at("seed").get<uint64_t>();
  for (int i = 0; i < 2; ++i) {
    const json& p = j.at("pass").at(i);
    r.pass[i].blur_sigma = p.at("blur_sigma").get<double>();
    r.pass[i].down_scale = p.at("down_scale").get<double>();
    r.pass[i].noise_sigma_read = p.at("noise_sigma_read").get<double>();
    r.pass[i].noise_sigma_shot = p.at("noise_sigma_shot").get<double>();
    r.pass[i].jpeg_quality = p.at("jpeg_quality").get<int>();
  }
  r.validate();
  return r;
}

SeverityPreset SeverityPreset::light() {
  return {"light", {0.2, 1.0}, {0.7, 1.0}, {0.0, 0.02}, {0.0, 0.02}, {70, 95}};
}

SeverityPreset SeverityPreset::heavy() {
  return {"heavy", {1.5, 3.0}, {0.25, 0.5}, {0.03, 0.08}, {0.02, 0.06}, {15, 45}};
}

SeverityPreset SeverityPreset::get(Severity s) {
  return s == Severity::kLight ? light() : heavy();
}

SeverityPreset SeverityPreset::by_name(const std::string& name) {
  if (name == "light") return light();
  if (name == "heavy") return heavy();
  throw ConfigError("unknown severity preset: " + name);
}

DegradationRecipe sample_recipe(const SeverityPreset& preset, uint64_t seed) {
  Rng rng(seed);
  DegradationRecipe r;
  r.seed = seed;
  for (int i = 0; i < 2; ++i) {
    // second pass: same families, halved intensities
    const double f = (i == 0) ? 1.0 : 0.5;
    DegradePass& p = r.pass[i];
    p.blur_sigma = f * rng.uniform(preset.blur_sigma.lo, preset.blur_sigma.hi);
    double ds = rng.uniform(preset.down_scale.lo, preset.down_scale.hi);
    p.down_scale = (i == 0) ? ds : 0.5 * (1.0 + ds);  // halved downscaling effect
    p.noise_sigma_read = f * rng.uniform(preset.noise_sigma_read.lo, preset.noise_sigma_read.hi);
    p.noise_sigma_shot = f * rng.uniform(preset.noise_sigma_shot.lo, preset.noise_sigma_shot.hi);
    double q = rng.uniform(preset.jpeg_quality.lo, preset.jpeg_quality.hi);
    if (i == 1) q = q + 0.5 * (100.0 - q);  // milder compression on the second pass
    p.jpeg_quality = std::clamp(static_cast<int>(std::lround(q)), 10, 100);
  }
  r.validate();
  return r;
}

Image srgb_to_raw(const Image& img) {
  Image out(img.h, img.w);
  for (size_t i = 0; i < img.data.size(); ++i) {
    float v = img.data[i];
    if (v < 0.f || v > 1.f) throw ValidationError("srgb_to_raw: value outside [0,1]");
    out.data[i] = static_cast<float>(std::pow(static_cast<double>(v), kGamma));
  }
  return out;
}

Image raw_to_srgb(const Image& img) {
  Image out(img.h, img.w);
  for (size_t i = 0; i < img.data.size(); ++i) {
    float v = std::clamp(img.data[i], 0.f, 1.f);
    out.data[i] = static_cast<float>(std::pow(static_cast<double>(v), 1.0 / kGamma));
  }
  return out;
}

Image add_raw_noise(const Image& img_raw, double sigma_read, double sigma_shot,
                    uint64_t seed) {
  if (sigma_read < 0 || sigma_shot < 0) throw ValidationError("add_raw_noise: negative sigma");
  if (sigma_read == 0 && sigma_shot == 0) return img_raw;
  Rng rng(seed);
  Image out(img_raw.h, img_raw.w);
  for (size_t i = 0; i < img_raw.data.size(); ++i) {
    double x = img_raw.data[i];
    double var = sigma_read * sigma_read + sigma_shot * sigma_shot * std::max(x, 0.0);
    double y = x + rng.normal() * std::sqrt(var);
    out.data[i] = static_cast<float>(std::clamp(y, 0.0, 1.0));
  }
  return out;
}

Image degrade(const Image& img, const DegradationRecipe& recipe) {
  recipe.validate();
  Image cur = img;
  for (int i = 0; i < 2; ++i) {
    const DegradePass& p = recipe.pass[i];
    cur = gaussian_blur(cur, p.blur_sigma);
    int nh = std::max(8, static_cast<int>(std::lround(cur.h * p.down_scale)));
    int nw = std::max(8, static_cast<int>(std::lround(cur.w * p.down_scale)));
    cur = resize_bilinear(cur, nh, nw);
    clamp01(cur);
    Image raw = srgb_to_raw(cur);
    raw = add_raw_noise(raw, p.noise_sigma_read, p.noise_sigma_shot,
                        derive_seed(recipe.seed, static_cast<uint64_t>(i)));
    cur = raw_to_srgb(raw);
    cur = jpeg_roundtrip(cur, p.jpeg_quality);
  }
  cur = resize_bilinear(cur, img.h, img.w);
  clamp01(cur);
  return cur;
}

}  // namespace rid
