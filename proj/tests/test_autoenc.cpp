#include <filesystem>

#include "doctest.h"
#include "gradcheck.h"
#include "restorerid/autoenc.h"
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

TEST_CASE("shape contracts and determinism") {
  Autoencoder ae;
  Rng rng(4);
  ae.init(rng);
  Image face = toy_face(0, 1);

  Tensor z = ae.encode_image(face);
  CHECK(z.shape == std::vector<int>{1, 4, 16, 16});
  Tensor z2 = ae.encode_image(face);
  CHECK(z.data == z2.data);

  Image out = ae.decode_latent(z);
  CHECK(out.h == 64);
  CHECK(out.w == 64);
  for (float v : out.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  Image zero_img = ae.decode_latent(Tensor::zeros({1, 4, 16, 16}));
  for (float v : zero_img.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("shape validation errors") {
  Autoencoder ae;
  Rng rng(4);
  ae.init(rng);
  CHECK_THROWS_AS(ae.encode_image(Image(32, 32)), ValidationError);
  CHECK_THROWS_AS(ae.decode_latent(Tensor::zeros({1, 4, 8, 8})), ValidationError);
}

TEST_CASE("reconstruction loss gradients match finite differences") {
  AutoencoderT<double> ae;
  Rng rng(11);
  ae.init(rng, /*base=*/8);
  Rng drng(12);
  TensorD x = TensorD::randn({2, 3, 16, 16}, drng, 0.4);
  auto params = ae.params();

  auto make_loss = [&](bool with_grad) {
    Graph<double> g;
    Var<double> recon = ae.decode(g, ae.encode(g, constant(g, x)));
    Var<double> loss = mse(recon, x);
    if (with_grad) g.backward(loss.id);
    return loss.val()[0];
  };
  gc::Result r = gc::check(params, make_loss, 1e-5, 4);
  CHECK(r.checked > 50);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("training smoke: loss decreases, reruns bit-identical") {
  fs::path d = fs::temp_directory_path() / "rid_autoenc_smoke";
  fs::remove_all(d);
  fs::create_directories(d);
  CorpusManifest corpus = generate_corpus(4, 4, 5, 64, d.string(), 0.0);

  TrainResult a = train_autoencoder(corpus, 20, 4, 2e-3, 9, d.string());
  CHECK(std::isfinite(a.losses.front()));
  CHECK(a.losses.back() < a.losses.front());

  TrainResult b = train_autoencoder(corpus, 20, 4, 2e-3, 9, d.string());
  CHECK(a.losses.back() == b.losses.back());

  Autoencoder ae = load_autoencoder(a.ckpt_path);
  CHECK(ae.latent_scale > 0);
  fs::remove_all(d);
}

TEST_CASE("empty corpus rejected") {
  CorpusManifest empty;
  CHECK_THROWS_AS(train_autoencoder(empty, 1, 1, 1e-3, 1, "/tmp"), ValidationError);
}
