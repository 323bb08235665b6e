#pragma once

#include <string>

#include "restorerid/image.h"
#include "restorerid/rng.h"

namespace rid {

// One pass of the two-pass chain: blur -> downscale -> raw-domain noise -> JPEG.
struct DegradePass {
  double blur_sigma = 0.0;       // pixels
  double down_scale = 1.0;       // (0,1]
  double noise_sigma_read = 0.0; // raw-domain std
  double noise_sigma_shot = 0.0; // raw-domain signal-dependent coefficient
  int jpeg_quality = 100;        // [10,100]
};

struct DegradationRecipe {
  DegradePass pass[2];
  uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static DegradationRecipe from_json(const std::string& text);
};

enum class Severity { kLight, kHeavy };

struct ParamRange {
  double lo, hi;
};

// Per-field sampling ranges; pass 2 uses the same families at half intensity.
struct SeverityPreset {
  std::string name;
  ParamRange blur_sigma;
  ParamRange down_scale;
  ParamRange noise_sigma_read;
  ParamRange noise_sigma_shot;
  ParamRange jpeg_quality;

  static SeverityPreset light();
  static SeverityPreset heavy();
  static SeverityPreset get(Severity s);
  static SeverityPreset by_name(const std::string& name);
};

DegradationRecipe sample_recipe(const SeverityPreset& preset, uint64_t seed);

Image srgb_to_raw(const Image& img);
Image raw_to_srgb(const Image& img);

Image add_raw_noise(const Image& img_raw, double sigma_read, double sigma_shot,
                    uint64_t seed);

Image degrade(const Image& img, const DegradationRecipe& recipe);

}  // namespace rid
