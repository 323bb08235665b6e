#include <benchmark/benchmark.h>

#include "restorerid/degrade.h"
#include "restorerid/diffusion.h"
#include "restorerid/toyfaces.h"
#include "restorerid/training.h"

using namespace rid;

static Image bench_face() {
  Rng rng(42);
  IdentitySpec id = sample_identity(0, rng);
  VariationSpec var = sample_variation(rng);
  return render_face(id, var, 64).image;
}

static void BM_RenderFace(benchmark::State& state) {
  Rng rng(42);
  IdentitySpec id = sample_identity(0, rng);
  VariationSpec var = sample_variation(rng);
  for (auto _ : state) benchmark::DoNotOptimize(render_face(id, var, 64).image.data);
}
BENCHMARK(BM_RenderFace);

static void BM_DegradeHeavy(benchmark::State& state) {
  Image img = bench_face();
  DegradationRecipe r = sample_recipe(SeverityPreset::heavy(), 7);
  for (auto _ : state) benchmark::DoNotOptimize(degrade(img, r).data);
}
BENCHMARK(BM_DegradeHeavy);

static void BM_UNetForward(benchmark::State& state) {
  Denoiser den = make_denoiser(1);
  Rng rng(3);
  Tensor z = Tensor::randn({1, 4, 16, 16}, rng);
  Tensor lq = Tensor::randn({1, 4, 16, 16}, rng);
  Tensor emb = Tensor::randn({1, kIdEmbedDim}, rng);
  for (auto _ : state) {
    Graph<float> g;
    auto pyr = den.lq_extract(g, constant(g, z), {100.0});
    Var<float> tokens = project_tokens(g, den.projector, emb);
    benchmark::DoNotOptimize(
        den.fwd(g, constant(g, z), {100.0}, &pyr, tokens, 0.75).val().data);
  }
}
BENCHMARK(BM_UNetForward);

static void BM_TrainStepBatch4(benchmark::State& state) {
  Denoiser den = make_denoiser(1);
  ParamList<float> params = den.params_all();
  AdamW<float> opt;
  DiffusionSchedule sched = DiffusionSchedule::linear();
  Rng rng(5);
  Tensor z0 = Tensor::randn({4, 4, 16, 16}, rng);
  Tensor lq = Tensor::randn({4, 4, 16, 16}, rng);
  Tensor emb = Tensor::randn({4, kIdEmbedDim}, rng);
  Tensor eps = Tensor::randn({4, 4, 16, 16}, rng);
  std::vector<int> t{10, 300, 600, 900};
  for (auto _ : state) {
    zero_grads(params);
    Graph<float> g;
    Var<float> loss = diffusion_loss(g, den, sched, z0, t, &lq, &emb, eps, 0.75);
    g.backward(loss.id);
    opt.step(params);
    benchmark::DoNotOptimize(loss.val()[0]);
  }
}
BENCHMARK(BM_TrainStepBatch4);

BENCHMARK_MAIN();
