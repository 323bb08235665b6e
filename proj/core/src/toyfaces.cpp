#include "restorerid/toyfaces.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "restorerid/errors.h"
#include "restorerid/rng.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rid {

namespace {

struct Color {
  double r, g, b;
};

Color lerp(const Color& a, const Color& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

Color hsv(double h, double s, double v) {
  double i = std::floor(h * 6.0);
  double f = h * 6.0 - i;
  double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Signed distances in normalized face coordinates; negative = inside.
double sd_ellipse(double u, double v, double cx, double cy, double rx, double ry) {
  double du = (u - cx) / rx, dv = (v - cy) / ry;
  double f = std::sqrt(du * du + dv * dv) - 1.0;
  return f * std::min(rx, ry);  // approximate euclidean distance
}

double sd_segment(double u, double v, double ax, double ay, double bx, double by,
                  double radius) {
  double pax = u - ax, pay = v - ay, bax = bx - ax, bay = by - ay;
  double hlen = (pax * bax + pay * bay) / (bax * bax + bay * bay + 1e-12);
  hlen = std::clamp(hlen, 0.0, 1.0);
  double dx = pax - bax * hlen, dy = pay - bay * hlen;
  return std::sqrt(dx * dx + dy * dy) - radius;
}

double coverage(double sd, double aa) { return std::clamp(0.5 - sd / aa, 0.0, 1.0); }

// Geometry of one rendered face, derived once per (identity, variation).
struct FaceLayout {
  double cosy;           // yaw foreshortening
  double shift;          // horizontal feature shift from yaw
  double cx, cy;         // face center
  double rx_top, rx_bot, ry;
  double eye_off, eye_r, eye_y;
  double brow_tilt;
  double nose_len;
  double mouth_half_w, mouth_curv, mouth_y;
  double hair_extent;
  double jx[8];          // per-part jitter
  Color skin, hair, mouthc;
};

FaceLayout layout_face(const IdentitySpec& id, const VariationSpec& var) {
  const auto& g = id.geometry;
  FaceLayout L{};
  L.cosy = std::cos(var.yaw);
  L.shift = 0.30 * std::sin(var.yaw);

  Rng jit(var.jitter_seed);
  for (double& j : L.jx) j = jit.uniform(-0.006, 0.006);

  L.cx = 0.20 * std::sin(var.yaw);
  L.cy = 0.03;
  double aspect = 0.52 + 0.08 * g[0];
  L.ry = 0.66;
  L.rx_top = aspect + 0.0;  // upper face half-width (before yaw)
  L.rx_bot = L.rx_top * (1.0 + 0.18 * g[9]);
  L.eye_off = 0.20 + 0.07 * g[1];
  L.eye_r = 0.075 + 0.028 * g[2];
  L.eye_y = L.cy - 0.16;
  L.brow_tilt = 0.20 * g[3];
  L.nose_len = 0.16 + 0.07 * g[4];
  L.mouth_half_w = 0.15 + 0.07 * g[5];
  L.mouth_curv = 0.10 * g[6];
  L.mouth_y = L.cy + 0.34;
  L.hair_extent = 0.35 + 0.30 * (0.5 + 0.5 * g[8]);

  double tone = 0.5 + 0.5 * g[7];
  L.skin = lerp({0.96, 0.82, 0.69}, {0.48, 0.32, 0.22}, tone);
  L.hair = lerp({0.10, 0.07, 0.05}, {0.42, 0.30, 0.14}, 0.5 + 0.5 * g[8] * g[7]);
  L.mouthc = {0.72, 0.28, 0.30};
  return L;
}

Color shade_point(const FaceLayout& L, const VariationSpec& var, double u, double v,
                  double aa) {
  Color bg = hsv(var.background_hue, 0.35, 0.85);
  Color col = bg;

  double rx_face = (0.5 * (L.rx_top + L.rx_bot)) * L.cosy;

  // hair cap behind the face
  double sd_hair = sd_ellipse(u, v, L.cx, L.cy - 0.05, rx_face * 1.12, L.ry * 1.10);
  double hair_mask = coverage(sd_hair, aa) *
                     std::clamp((L.cy - 0.05 + L.hair_extent - v) / 0.02, 0.0, 1.0);
  col = lerp(col, L.hair, hair_mask);

  // face: jaw width blends the half-width from top to bottom
  double t = std::clamp((v - (L.cy - L.ry)) / (2.0 * L.ry), 0.0, 1.0);
  double rx_here = (L.rx_top + (L.rx_bot - L.rx_top) * t) * L.cosy;
  double sd_face = sd_ellipse(u, v, L.cx, L.cy, rx_here, L.ry);
  col = lerp(col, L.skin, coverage(sd_face, aa));

  // fringe of hair over the forehead
  double sd_fringe = sd_ellipse(u, v, L.cx, L.cy - L.ry * 0.92, rx_face * 0.98,
                                0.26 * L.hair_extent + 0.12);
  col = lerp(col, L.hair, coverage(sd_fringe, aa));

  double exl = L.cx + L.shift + (-L.eye_off + L.jx[0]) * L.cosy;
  double exr = L.cx + L.shift + (L.eye_off + L.jx[1]) * L.cosy;
  double ey = L.eye_y + L.jx[2];

  // eyes: white + pupil
  for (double ex : {exl, exr}) {
    double sd_white = sd_ellipse(u, v, ex, ey, L.eye_r * L.cosy, L.eye_r * 0.80);
    col = lerp(col, {0.97, 0.97, 0.97}, coverage(sd_white, aa));
    double sd_pupil = sd_ellipse(u, v, ex + 0.25 * L.shift * L.eye_r / 0.1, ey,
                                 L.eye_r * 0.42 * L.cosy, L.eye_r * 0.42);
    col = lerp(col, {0.09, 0.08, 0.10}, coverage(sd_pupil, aa));
  }

  // brows
  double bw = L.eye_r * 1.25 * L.cosy;
  double by = ey - L.eye_r * 1.7 + L.jx[3];
  double sd_bl = sd_segment(u, v, exl - bw, by + L.brow_tilt * bw, exl + bw,
                            by - L.brow_tilt * bw, 0.016);
  double sd_br = sd_segment(u, v, exr - bw, by - L.brow_tilt * bw, exr + bw,
                            by + L.brow_tilt * bw, 0.016);
  col = lerp(col, L.hair, coverage(std::min(sd_bl, sd_br), aa));

  // nose
  double nx = L.cx + 1.15 * L.shift + L.jx[4] * L.cosy;
  double ny0 = L.cy - 0.02, ny1 = ny0 + L.nose_len;
  Color nose_col = lerp(L.skin, {0.0, 0.0, 0.0}, 0.25);
  col = lerp(col, nose_col, coverage(sd_segment(u, v, nx, ny0, nx, ny1, 0.022), aa));

  // mouth: three segments approximating a quadratic bend
  double mx = L.cx + 0.9 * L.shift + L.jx[5] * L.cosy;
  double my = L.mouth_y + L.jx[6];
  double hw = L.mouth_half_w * L.cosy;
  double sd_m = std::min(
      {sd_segment(u, v, mx - hw, my, mx - hw / 3, my - L.mouth_curv, 0.020),
       sd_segment(u, v, mx - hw / 3, my - L.mouth_curv, mx + hw / 3, my - L.mouth_curv, 0.020),
       sd_segment(u, v, mx + hw / 3, my - L.mouth_curv, mx + hw, my, 0.020)});
  col = lerp(col, L.mouthc, coverage(sd_m, aa));

  double gain = var.illumination_gain;
  return {std::clamp(col.r * gain, 0.0, 1.0), std::clamp(col.g * gain, 0.0, 1.0),
          std::clamp(col.b * gain, 0.0, 1.0)};
}

}  // namespace

void IdentitySpec::validate() const {
  if (id_label < 0) throw ValidationError("identity: negative id_label");
  for (double g : geometry)
    if (g < -1.0 || g > 1.0) throw ValidationError("identity: geometry out of [-1,1]");
}

void VariationSpec::validate() const {
  if (yaw < -0.35 || yaw > 0.35) throw ValidationError("variation: yaw out of range");
  if (illumination_gain < 0.7 || illumination_gain > 1.3)
    throw ValidationError("variation: illumination_gain out of range");
  if (background_hue < 0.0 || background_hue > 1.0)
    throw ValidationError("variation: background_hue out of range");
}

RenderResult render_face(const IdentitySpec& identity, const VariationSpec& variation,
                         int resolution) {
  if (resolution != 32 && resolution != 64 && resolution != 128)
    throw ConfigError("render_face: resolution must be 32, 64, or 128");
  identity.validate();
  variation.validate();

  FaceLayout L = layout_face(identity, variation);
  const double aa = 2.0 / resolution;

  RenderResult out;
  out.image = Image(resolution, resolution);
  // 2x2 supersampling
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      Color acc{0, 0, 0};
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          double u = ((x + 0.25 + 0.5 * sx) / resolution) * 2.0 - 1.0;
          double v = ((y + 0.25 + 0.5 * sy) / resolution) * 2.0 - 1.0;
          Color c = shade_point(L, variation, u, v, aa);
          acc.r += c.r;
          acc.g += c.g;
          acc.b += c.b;
        }
      out.image.at(y, x, 0) = static_cast<float>(acc.r / 4.0);
      out.image.at(y, x, 1) = static_cast<float>(acc.g / 4.0);
      out.image.at(y, x, 2) = static_cast<float>(acc.b / 4.0);
    }

  auto to_px = [resolution](double u) { return (u + 1.0) * 0.5 * resolution; };
  PartCenters& p = out.parts;
  double exl = L.cx + L.shift + (-L.eye_off + L.jx[0]) * L.cosy;
  double exr = L.cx + L.shift + (L.eye_off + L.jx[1]) * L.cosy;
  double ey = L.eye_y + L.jx[2];
  p.left_eye[0] = to_px(exl);
  p.left_eye[1] = to_px(ey);
  p.right_eye[0] = to_px(exr);
  p.right_eye[1] = to_px(ey);
  p.nose[0] = to_px(L.cx + 1.15 * L.shift + L.jx[4] * L.cosy);
  p.nose[1] = to_px(L.cy - 0.02 + L.nose_len);
  p.mouth[0] = to_px(L.cx + 0.9 * L.shift + L.jx[5] * L.cosy);
  p.mouth[1] = to_px(L.mouth_y + L.jx[6]);
  p.face_center[0] = to_px(L.cx);
  p.face_center[1] = to_px(L.cy);
  p.face_rx = 0.5 * (L.rx_top + L.rx_bot) * L.cosy * 0.5 * resolution;
  p.face_ry = L.ry * 0.5 * resolution;
  p.eye_spacing_ratio = L.eye_off / (0.5 * (L.rx_top + L.rx_bot));
  return out;
}

IdentitySpec sample_identity(int id_label, Rng& rng) {
  IdentitySpec id;
  id.id_label = id_label;
  for (auto& g : id.geometry) g = rng.uniform(-1.0, 1.0);
  return id;
}

VariationSpec sample_variation(Rng& rng) {
  VariationSpec v;
  v.yaw = rng.uniform(-0.35, 0.35);
  v.illumination_gain = rng.uniform(0.7, 1.3);
  v.background_hue = rng.uniform(0.0, 1.0);
  v.jitter_seed = rng.next_u64();
  return v;
}

namespace {

json parts_to_json(const PartCenters& p) {
  return json{{"left_eye", {p.left_eye[0], p.left_eye[1]}},
              {"right_eye", {p.right_eye[0], p.right_eye[1]}},
              {"nose", {p.nose[0], p.nose[1]}},
              {"mouth", {p.mouth[0], p.mouth[1]}},
              {"face_center", {p.face_center[0], p.face_center[1]}},
              {"face_rx", p.face_rx},
              {"face_ry", p.face_ry},
              {"eye_spacing_ratio", p.eye_spacing_ratio}};
}

PartCenters parts_from_json(const json& j) {
  PartCenters p{};
  auto rd = [&j](const char* key, double* out) {
    out[0] = j.at(key).at(0).get<double>();
    out[1] = j.at(key).at(1).get<double>();
  };
  rd("left_eye", p.left_eye);
  rd("right_eye", p.right_eye);
  rd("nose", p.nose);
  rd("mouth", p.mouth);
  rd("face_center", p.face_center);
  p.face_rx = j.at("face_rx").get<double>();
  p.face_ry = j.at("face_ry").get<double>();
  p.eye_spacing_ratio = j.at("eye_spacing_ratio").get<double>();
  return p;
}

}  // namespace

std::vector<int> CorpusManifest::identity_labels(bool heldout) const {
  std::vector<int> out;
  for (const auto& e : entries)
    if (e.heldout == heldout &&
        (out.empty() || std::find(out.begin(), out.end(), e.id_label) == out.end()))
      out.push_back(e.id_label);
  return out;
}

std::vector<const CorpusEntry*> CorpusManifest::entries_of(int id_label) const {
  std::vector<const CorpusEntry*> out;
  for (const auto& e : entries)
    if (e.id_label == id_label) out.push_back(&e);
  return out;
}

std::string manifest_path_of(const std::string& dir) {
  return (fs::path(dir) / "manifest.jsonl").string();
}

CorpusManifest generate_corpus(int n_identities, int n_variations, uint64_t seed,
                               int resolution, const std::string& out_dir,
                               double heldout_fraction) {
  if (n_identities < 2 || n_variations < 2)
    throw ValidationError("generate_corpus: need at least 2 identities and 2 variations");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw IoError("cannot create corpus dir " + out_dir);

  const int n_heldout = static_cast<int>(std::lround(heldout_fraction * n_identities));

  CorpusManifest man;
  man.resolution = resolution;
  man.seed = seed;
  man.dir = out_dir;

  std::ofstream mf(manifest_path_of(out_dir), std::ios::binary);
  if (!mf) throw IoError("cannot write manifest in " + out_dir);

  for (int i = 0; i < n_identities; ++i) {
    Rng id_rng(derive_seed(seed, static_cast<uint64_t>(i)));
    IdentitySpec id = sample_identity(i, id_rng);
    const bool heldout = i >= n_identities - n_heldout;
    for (int k = 0; k < n_variations; ++k) {
      Rng var_rng(derive_seed(seed, (static_cast<uint64_t>(i) << 20) + 7919 + k));
      VariationSpec var = sample_variation(var_rng);
      RenderResult r = render_face(id, var, resolution);

      char name[64];
      std::snprintf(name, sizeof(name), "img_%04d_%02d.png", i, k);
      save_png(r.image, (fs::path(out_dir) / name).string());

      CorpusEntry e;
      e.id_label = i;
      e.path = name;
      e.variation = var;
      e.parts = r.parts;
      e.heldout = heldout;
      man.entries.push_back(e);

      json rec{{"id_label", i},
               {"path", e.path},
               {"variation",
                {{"yaw", var.yaw},
                 {"illumination_gain", var.illumination_gain},
                 {"background_hue", var.background_hue},
                 {"jitter_seed", var.jitter_seed}}},
               {"parts", parts_to_json(r.parts)},
               {"split", heldout ? "heldout" : "train"}};
      mf << rec.dump() << "\n";
    }
  }
  mf.close();
  return man;
}

CorpusManifest load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + manifest_path);
  CorpusManifest man;
  man.dir = fs::path(manifest_path).parent_path().string();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    CorpusEntry e;
    e.id_label = rec.at("id_label").get<int>();
    e.path = rec.at("path").get<std::string>();
    const json& v = rec.at("variation");
    e.variation.yaw = v.at("yaw").get<double>();
    e.variation.illumination_gain = v.at("illumination_gain").get<double>();
    e.variation.background_hue = v.at("background_hue").get<double>();
    e.variation.jitter_seed = v.at("jitter_seed").get<uint64_t>();
    e.parts = parts_from_json(rec.at("parts"));
    e.heldout = rec.at("split").get<std::string>() == "heldout";
    man.entries.push_back(std::move(e));
  }
  if (man.entries.empty()) throw ValidationError("empty manifest " + manifest_path);
  Image first = load_png((fs::path(man.dir) / man.entries.front().path).string());
  man.resolution = first.h;
  return man;
}

}  // namespace rid
