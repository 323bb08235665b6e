#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "restorerid/idenc.h"
#include "restorerid/toyfaces.h"
#include "restorerid/training.h"

using namespace rid;
namespace fs = std::filesystem;

namespace {

Image toy_face(int id, uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<uint64_t>(id)));
  return render_face(sample_identity(id, rng), sample_variation(rng), 64).image;
}

}  // namespace

TEST_CASE("embed yields deterministic unit-norm vectors") {
  IdEncoder enc;
  Rng rng(3);
  enc.init(4, rng);
  Image face = toy_face(0, 2);
  IdentityEmbedding e = embed(enc, face);
  CHECK(e.size() == static_cast<size_t>(kIdEmbedDim));
  double norm = 0;
  for (float v : e) norm += static_cast<double>(v) * v;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(embed(enc, face) == e);
}

TEST_CASE("id_similarity algebra and validation") {
  IdentityEmbedding a(kIdEmbedDim, 0.0f), b(kIdEmbedDim, 0.0f);
  a[0] = 1.0f;
  b[1] = 1.0f;
  CHECK(id_similarity(a, a) == doctest::Approx(1.0));
  CHECK(id_similarity(a, b) == doctest::Approx(0.0));
  IdentityEmbedding neg = a;
  neg[0] = -1.0f;
  CHECK(id_similarity(a, neg) == doctest::Approx(-1.0));
  CHECK(id_similarity(a, b) == id_similarity(b, a));

  IdentityEmbedding unnorm(kIdEmbedDim, 0.5f);
  CHECK_THROWS_AS(id_similarity(a, unnorm), ValidationError);
  IdentityEmbedding short_vec(64, 0.0f);
  CHECK_THROWS_AS(id_similarity(a, short_vec), ValidationError);
}

TEST_CASE("project_tokens shape, zero weights, linearity") {
  TokenProjector proj;
  Rng rng(7);
  proj.init(rng);

  Tensor e({1, kIdEmbedDim});
  Rng erng(8);
  for (auto& v : e.data) v = static_cast<float>(erng.normal());

  Graph<float> g;
  Var<float> tok = project_tokens(g, proj, e);
  CHECK(tok.shape() == std::vector<int>{1, kIdTokens, kIdEmbedDim});

  // linearity of the bias-free map
  Tensor e2 = e;
  for (auto& v : e2.data) v *= 2.0f;
  Var<float> tok2 = project_tokens(g, proj, e2);
  for (int64_t i = 0; i < tok.val().numel(); ++i)
    CHECK(tok2.val()[i] == doctest::Approx(2.0f * tok.val()[i]).epsilon(1e-5));

  // zero weights -> zero tokens
  proj.proj.w.value.fill(0.0f);
  Graph<float> g2;
  Var<float> zt = project_tokens(g2, proj, e);
  for (int64_t i = 0; i < zt.val().numel(); ++i) CHECK(zt.val()[i] == 0.0f);

  Tensor bad({1, 64});
  CHECK_THROWS_AS(project_tokens(g2, proj, bad), ValidationError);
}

TEST_CASE("training smoke: better than chance, deterministic reruns") {
  fs::path d = fs::temp_directory_path() / "rid_idenc_smoke";
  fs::remove_all(d);
  fs::create_directories(d);
  CorpusManifest corpus = generate_corpus(10, 3, 6, 64, d.string(), 0.0);

  TrainResult a = train_idencoder(corpus, 80, 8, 2e-3, 4, d.string());
  CHECK(std::isfinite(a.losses.back()));
  IdEncoder enc = load_idencoder(a.ckpt_path);

  // classification accuracy on train images must beat the 1/10 baseline
  std::vector<int> labels = corpus.identity_labels(false);
  std::sort(labels.begin(), labels.end());
  int correct = 0, total = 0;
  for (const auto& e : corpus.entries) {
    Image img = load_png(corpus.dir + "/" + e.path);
    Graph<float> g;
    Tensor logits = enc.logits(g, constant(g, image_to_tensor(img))).val();
    int best = 0;
    for (int c = 1; c < enc.n_classes; ++c)
      if (logits[c] > logits[best]) best = c;
    if (labels[static_cast<size_t>(best)] == e.id_label) ++correct;
    ++total;
  }
  CHECK(static_cast<double>(correct) / total > 1.0 / 10.0);

  TrainResult b = train_idencoder(corpus, 3, 8, 2e-3, 4, d.string());
  const uint64_t first_hash = file_hash(b.ckpt_path);
  TrainResult c = train_idencoder(corpus, 3, 8, 2e-3, 4, d.string());
  CHECK(first_hash == file_hash(c.ckpt_path));
  CHECK(b.losses == c.losses);

  CorpusManifest single;
  single.entries.push_back(corpus.entries[0]);
  single.dir = corpus.dir;
  CHECK_THROWS_AS(train_idencoder(single, 1, 1, 1e-3, 1, d.string()), ValidationError);
  fs::remove_all(d);
}
