#pragma once

#include <array>
#include <string>
#include <vector>

#include "restorerid/image.h"

namespace rid {

// Procedural identity: 10 geometry knobs in [-1,1].
// 0 face aspect, 1 eye spacing, 2 eye size, 3 brow tilt, 4 nose length,
// 5 mouth width, 6 mouth curvature, 7 skin tone, 8 hair arc extent, 9 jaw width
struct IdentitySpec {
  int id_label = 0;
  std::array<double, 10> geometry{};

  void validate() const;
};

struct VariationSpec {
  double yaw = 0.0;                // [-0.35, 0.35] radians
  double illumination_gain = 1.0;  // [0.7, 1.3]
  double background_hue = 0.0;     // [0, 1]
  uint64_t jitter_seed = 0;

  void validate() const;
};

// Analytic part centers in pixel coordinates, recorded at render time.
struct PartCenters {
  double left_eye[2];
  double right_eye[2];
  double nose[2];
  double mouth[2];
  double face_center[2];
  double face_rx, face_ry;
  // eye spacing in units of face half-width; identity-owned, yaw-invariant
  double eye_spacing_ratio;
};

struct RenderResult {
  Image image;
  PartCenters parts;
};

RenderResult render_face(const IdentitySpec& identity, const VariationSpec& variation,
                         int resolution);

IdentitySpec sample_identity(int id_label, Rng& rng);
VariationSpec sample_variation(Rng& rng);

struct CorpusEntry {
  int id_label = 0;
  std::string path;  // relative to manifest directory
  VariationSpec variation;
  PartCenters parts;
  bool heldout = false;
};

struct CorpusManifest {
  int resolution = 64;
  uint64_t seed = 0;
  std::vector<CorpusEntry> entries;
  std::string dir;  // directory the manifest was loaded from / written to

  std::vector<int> identity_labels(bool heldout) const;
  std::vector<const CorpusEntry*> entries_of(int id_label) const;
};

CorpusManifest generate_corpus(int n_identities, int n_variations, uint64_t seed,
                               int resolution, const std::string& out_dir,
                               double heldout_fraction = 0.1);

CorpusManifest load_manifest(const std::string& manifest_path);
std::string manifest_path_of(const std::string& dir);

}  // namespace rid
