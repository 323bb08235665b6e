#include <cmath>

#include "doctest.h"
#include "restorerid/metrics.h"
#include "restorerid/toyfaces.h"

using namespace rid;

namespace {

Image toy_face(int id, uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<uint64_t>(id)));
  return render_face(sample_identity(id, rng), sample_variation(rng), 64).image;
}

Image flat(int h, int w, float v) {
  Image img(h, w);
  for (auto& p : img.data) p = v;
  return img;
}

// analytic pair p: sinusoidal base plus a cosine perturbation of growing
// amplitude, quantized to float32 exactly as the reference values were
void golden_pair(int p, Image& a, Image& b) {
  a = Image(32, 32);
  b = Image(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) {
        double av = 0.5 + 0.45 * std::sin(0.37 * (x + 1) * (c + 1) + 0.23 * (y + 1) + p);
        double bv = av + 0.02 * (p + 1) *
                             std::cos(0.29 * (x + 1) + 0.31 * (y + 1) * (c + 1) + 2.0 * p);
        a.at(y, x, c) = static_cast<float>(av);
        b.at(y, x, c) = static_cast<float>(std::min(1.0, std::max(0.0, bv)));
      }
}

}  // namespace

TEST_CASE("psnr closed forms, cap, symmetry") {
  Image a = flat(16, 16, 0.4f), b = flat(16, 16, 0.5f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(psnr(a, b) == psnr(b, a));
  Image c = flat(16, 16, 0.41f);
  CHECK(psnr(a, c) == doctest::Approx(40.0).epsilon(1e-4));
  CHECK(psnr(a, a) == 100.0);
  CHECK_THROWS_AS(psnr(a, flat(8, 8, 0.5f)), ValidationError);
}

TEST_CASE("ssim basics") {
  Image face = toy_face(0, 7);
  CHECK(ssim(face, face) == doctest::Approx(1.0).epsilon(1e-9));

  Image inv = face;
  for (auto& v : inv.data) v = 1.0f - v;
  double s = ssim(face, inv);
  CHECK(s < 1.0);
  CHECK(s == doctest::Approx(ssim(inv, face)).epsilon(1e-12));

  CHECK_THROWS_AS(ssim(flat(8, 8, 0.5f), flat(8, 8, 0.5f)), ValidationError);
  CHECK_THROWS_AS(ssim(face, flat(32, 32, 0.5f)), ValidationError);
}

TEST_CASE("ssim matches reference values on analytic pairs") {
  // computed once with an independent reference implementation
  const double golden[10] = {
      0.998627882428, 0.994697483268, 0.987984909693, 0.978600780068,
      0.968365085075, 0.956745649573, 0.941581072965, 0.922771562220,
      0.902791180379, 0.882974625993,
  };
  for (int p = 0; p < 10; ++p) {
    Image a, b;
    golden_pair(p, a, b);
    CHECK(ssim(a, b) == doctest::Approx(golden[p]).epsilon(1e-6));
  }
}

TEST_CASE("paired t-test") {
  std::vector<double> a(10), b(10);
  for (int i = 0; i < 10; ++i) {
    a[static_cast<size_t>(i)] = 0.1 * i + 0.05 * std::sin(i);
    b[static_cast<size_t>(i)] = 0.1 * i + 0.02 * std::cos(3.0 * i);
  }
  // reference value from an independent implementation
  CHECK(paired_ttest_p(a, b) == doctest::Approx(0.48656586121881396).epsilon(1e-9));
  CHECK(paired_ttest_p(a, b) == paired_ttest_p(b, a));

  CHECK(paired_ttest_p(a, a) == 1.0);
  std::vector<double> shifted = a;
  for (double& v : shifted) v += 0.5;
  CHECK(paired_ttest_p(a, shifted) < 1e-100);  // near-zero-variance constant shift

  // a strong consistent effect must be significant
  std::vector<double> c(12), d(12);
  for (int i = 0; i < 12; ++i) {
    c[static_cast<size_t>(i)] = i + 0.01 * std::sin(7.0 * i);
    d[static_cast<size_t>(i)] = c[static_cast<size_t>(i)] + 1.0 + 0.05 * std::cos(5.0 * i);
  }
  CHECK(paired_ttest_p(c, d) < 1e-6);

  std::vector<double> short_v{1.0};
  CHECK_THROWS_AS(paired_ttest_p(short_v, short_v), ValidationError);
  CHECK_THROWS_AS(paired_ttest_p(a, c), ValidationError);
}

TEST_CASE("report aggregation is the exact mean") {
  MetricReport rep;
  rep.psnr_v = {10, 20, 40};
  rep.ssim_v = {0.25, 0.75};
  rep.id_sim_v = {1.0};
  rep.finalize();
  CHECK(rep.psnr_mean == doctest::Approx(70.0 / 3).epsilon(1e-12));
  CHECK(rep.ssim_mean == 0.5);
  CHECK(rep.id_sim_mean == 1.0);
  CHECK(rep.quality_mean == 0.0);
}

TEST_CASE("evaluate with oracle and passthrough mocks") {
  IdEncoder enc;
  Rng rng(3);
  enc.init(4, rng);
  std::vector<EvalItem> items;
  for (int i = 0; i < 4; ++i)
    items.push_back({toy_face(i, 31), toy_face(i, 32), i});

  // returning the ground truth scores perfectly
  size_t idx = 0;
  Restorer oracle = [&](const Image&, const Image&, uint64_t) {
    return items[idx++].gt;
  };
  MetricReport perfect = evaluate(oracle, enc, items, SeverityPreset::light(), 5);
  for (double v : perfect.psnr_v) CHECK(v == 100.0);
  for (double v : perfect.ssim_v) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  for (double v : perfect.id_sim_v) CHECK(v == doctest::Approx(1.0).epsilon(1e-5));

  // passthrough: the report must equal direct LQ-vs-GT metrics
  std::vector<Image> seen;
  Restorer passthrough = [&](const Image& lq, const Image&, uint64_t) {
    seen.push_back(lq);
    return lq;
  };
  MetricReport rep = evaluate(passthrough, enc, items, SeverityPreset::heavy(), 5);
  REQUIRE(seen.size() == items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    CHECK(rep.psnr_v[i] == psnr(seen[i], items[i].gt));
    CHECK(rep.ssim_v[i] == ssim(seen[i], items[i].gt));
  }

  seen.clear();
  MetricReport rep2 = evaluate(passthrough, enc, items, SeverityPreset::heavy(), 5);
  CHECK(rep2.psnr_v == rep.psnr_v);
  CHECK(rep2.id_sim_v == rep.id_sim_v);
  CHECK(rep.provenance.at("severity") == "heavy");
}

TEST_CASE("ablation handles missing variants") {
  IdEncoder enc;
  Rng rng(3);
  enc.init(4, rng);
  std::vector<EvalItem> items;
  for (int i = 0; i < 2; ++i)
    items.push_back({toy_face(i, 41), toy_face(i, 42), i});

  Restorer passthrough = [](const Image& lq, const Image&, uint64_t) { return lq; };
  std::vector<std::pair<std::string, std::optional<Restorer>>> variants = {
      {"full", passthrough},
      {"no_fir", std::nullopt},
  };
  std::vector<AblationRow> rows = run_ablation(variants, enc, items, 9);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].present);
  CHECK(rows[1].present);
  CHECK(!rows[2].present);
  CHECK(!rows[3].present);
  CHECK(rows[0].severity == "light");
  CHECK(rows[1].severity == "heavy");
  CHECK(rows[0].psnr > 0);
}
