#include <cmath>

#include "doctest.h"
#include "restorerid/degrade.h"
#include "restorerid/metrics.h"
#include "restorerid/toyfaces.h"

using namespace rid;

namespace {

Image toy_face(int id, uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<uint64_t>(id)));
  return render_face(sample_identity(id, rng), sample_variation(rng), 64).image;
}

}  // namespace

TEST_CASE("sample_recipe determinism and range containment") {
  SeverityPreset light = SeverityPreset::light();
  CHECK(sample_recipe(light, 42).to_json() == sample_recipe(light, 42).to_json());

  double light_blur = 0, heavy_blur = 0;
  for (int i = 0; i < 1000; ++i) {
    DegradationRecipe r = sample_recipe(light, derive_seed(1, static_cast<uint64_t>(i)));
    CHECK(r.pass[0].blur_sigma >= light.blur_sigma.lo);
    CHECK(r.pass[0].blur_sigma <= light.blur_sigma.hi);
    CHECK(r.pass[0].down_scale >= light.down_scale.lo);
    CHECK(r.pass[0].down_scale <= light.down_scale.hi);
    CHECK(r.pass[0].jpeg_quality >= static_cast<int>(light.jpeg_quality.lo));
    CHECK(r.pass[0].jpeg_quality <= static_cast<int>(light.jpeg_quality.hi));
    light_blur += r.pass[0].blur_sigma;
    heavy_blur += sample_recipe(SeverityPreset::heavy(), derive_seed(2, static_cast<uint64_t>(i)))
                      .pass[0].blur_sigma;
  }
  CHECK(heavy_blur > light_blur);
}

TEST_CASE("recipe json round-trip and validation") {
  DegradationRecipe r = sample_recipe(SeverityPreset::heavy(), 9);
  DegradationRecipe back = DegradationRecipe::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  DegradationRecipe bad = r;
  bad.pass[0].jpeg_quality = 5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = r;
  bad.pass[1].down_scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("srgb <-> raw gamma curve") {
  Image img(2, 2);
  img.at(0, 0, 0) = 0.0f;
  img.at(0, 0, 1) = 1.0f;
  img.at(0, 0, 2) = 0.5f;
  Image raw = srgb_to_raw(img);
  CHECK(raw.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(raw.at(0, 0, 1) == doctest::Approx(1.0));
  CHECK(raw.at(0, 0, 2) == doctest::Approx(std::pow(0.5, 2.2)).epsilon(1e-6));

  Image face = toy_face(0, 3);
  Image rt = raw_to_srgb(srgb_to_raw(face));
  for (size_t i = 0; i < face.data.size(); ++i)
    CHECK(std::abs(rt.data[i] - face.data[i]) < 1e-6);

  Image out_of_range(1, 1);
  out_of_range.data[0] = 1.5f;
  CHECK_THROWS_AS(srgb_to_raw(out_of_range), ValidationError);
}

TEST_CASE("raw noise statistics") {
  Image flat(64, 64);
  for (auto& v : flat.data) v = 0.5f;

  Image same = add_raw_noise(flat, 0, 0, 7);
  for (size_t i = 0; i < flat.data.size(); ++i) CHECK(same.data[i] == flat.data[i]);

  Image noisy = add_raw_noise(flat, 0.05, 0, 7);
  double var = 0;
  for (size_t i = 0; i < flat.data.size(); ++i) {
    double d = noisy.data[i] - 0.5;
    var += d * d;
  }
  double stddev = std::sqrt(var / static_cast<double>(flat.data.size()));
  CHECK(stddev == doctest::Approx(0.05).epsilon(0.05));

  Image again = add_raw_noise(flat, 0.05, 0, 7);
  CHECK(image_hash(again) == image_hash(noisy));
  CHECK_THROWS_AS(add_raw_noise(flat, -0.1, 0, 7), ValidationError);
}

TEST_CASE("near-lossless recipe stays above 38 dB") {
  DegradationRecipe r;
  r.pass[0] = {0.0, 1.0, 0.0, 0.0, 100};
  r.pass[1] = {0.0, 1.0, 0.0, 0.0, 100};
  r.seed = 1;
  Image face = toy_face(1, 5);
  CHECK(psnr(degrade(face, r), face) >= 38.0);
}

TEST_CASE("degrade is deterministic") {
  Image face = toy_face(2, 8);
  DegradationRecipe r = sample_recipe(SeverityPreset::heavy(), 31);
  CHECK(image_hash(degrade(face, r)) == image_hash(degrade(face, r)));
}

TEST_CASE("heavy preset hurts PSNR more than light") {
  double light_psnr = 0, heavy_psnr = 0;
  const int n = 60;
  for (int i = 0; i < n; ++i) {
    Image face = toy_face(i, 21);
    light_psnr += psnr(degrade(face, sample_recipe(SeverityPreset::light(),
                                                   derive_seed(100, static_cast<uint64_t>(i)))),
                       face);
    heavy_psnr += psnr(degrade(face, sample_recipe(SeverityPreset::heavy(),
                                                   derive_seed(200, static_cast<uint64_t>(i)))),
                       face);
  }
  CHECK(heavy_psnr / n < light_psnr / n);
}

TEST_CASE("degraded output keeps the input resolution and range") {
  Image face = toy_face(4, 2);
  Image lq = degrade(face, sample_recipe(SeverityPreset::heavy(), 77));
  CHECK(lq.h == face.h);
  CHECK(lq.w == face.w);
  for (float v : lq.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}
