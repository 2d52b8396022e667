// Microbenchmarks for the kernels that dominate training time: the warp
// oracles used during dataset construction, the individual network stages,
// and a full forward/backward step at shipping model sizes.

#include <benchmark/benchmark.h>

#include <optional>
#include <vector>

#include "hypernets/dataset.hpp"
#include "hypernets/glyphs.hpp"
#include "hypernets/image.hpp"
#include "hypernets/model.hpp"
#include "hypernets/ops.hpp"
#include "hypernets/rng.hpp"
#include "hypernets/tape.hpp"
#include "hypernets/trainer.hpp"

namespace {

using namespace hypernets;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v));
}

void BM_rotate_image(benchmark::State& state) {
  const Image img = glyph_template(static_cast<int>(state.range(0)), 3);
  double angle = 0.0;
  for (auto _ : state) {
    angle += 13.7;
    benchmark::DoNotOptimize(rotate_image(img, angle));
  }
}
BENCHMARK(BM_rotate_image)->Arg(16)->Arg(32);

void BM_affine_transform(benchmark::State& state) {
  const Image img = glyph_template(static_cast<int>(state.range(0)), 3);
  const AffineParams p = sample_affine_params(7, AffineRanges{}, img.side);
  for (auto _ : state) benchmark::DoNotOptimize(affine_transform(img, p));
}
BENCHMARK(BM_affine_transform)->Arg(16)->Arg(32);

void BM_glyph_synthesis(benchmark::State& state) {
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(synth_glyphs(16, 1, seed++));
}
BENCHMARK(BM_glyph_synthesis);

void BM_conv2d_same(benchmark::State& state) {
  const Tensor x = random_tensor({8, 16, 16}, 1);
  const Tensor k = random_tensor({16, 8, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 2, Padding::Same));
}
BENCHMARK(BM_conv2d_same);

void BM_conv2d_transpose(benchmark::State& state) {
  const Tensor x = random_tensor({16, 4, 4}, 3);
  const Tensor k = random_tensor({16, 8, 3, 3}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_transpose(x, k, 2));
}
BENCHMARK(BM_conv2d_transpose);

void BM_modulated_dense(benchmark::State& state) {
  const int out = 256, in = static_cast<int>(state.range(0));
  const Tensor x = random_tensor({in}, 5);
  const Tensor W = random_tensor({out, in}, 6);
  const Tensor b = random_tensor({out}, 7);
  const Tensor logits = random_tensor({out * in}, 8);
  for (auto _ : state)
    benchmark::DoNotOptimize(modulated_dense(x, W, b, logits, SoftmaxAxis::PerRow));
}
BENCHMARK(BM_modulated_dense)->Arg(32)->Arg(64);

ModelSpec deep_spec() {
  ModelSpec spec;
  spec.architecture = Architecture::DeepHypernet;
  spec.image_side = 16;
  spec.control_dim = 2;
  spec.latent = 64;
  spec.enc_channels = {8, 16};
  spec.init_seed = 9;
  return spec;
}

void BM_deep_forward(benchmark::State& state) {
  const Model model = build_model(deep_spec());
  const Tensor x = glyph_template(16, 5).as_tensor();
  const Tensor phi({2}, {0.6, 0.8});
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, x, phi));
}
BENCHMARK(BM_deep_forward);

void BM_deep_forward_backward(benchmark::State& state) {
  const Model model = build_model(deep_spec());
  const Tensor x = glyph_template(16, 5).as_tensor();
  const Tensor target = rotate_image(glyph_template(16, 5), 53.0).as_tensor();
  const Tensor phi({2}, {0.6, 0.8});
  for (auto _ : state) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(model.params.size());
    for (const NamedParam& p : model.params) leaves.push_back(tape.leaf(p.value));
    const Tensor loss = mse_loss(forward(model.spec, leaves, x, phi), target);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(leaves.front()));
  }
}
BENCHMARK(BM_deep_forward_backward);

void BM_adam_step(benchmark::State& state) {
  const Model model = build_model(deep_spec());
  std::vector<Tensor> params, grads;
  for (const NamedParam& p : model.params) {
    params.push_back(p.value);
    grads.push_back(random_tensor(p.value.shape(), 31));
  }
  OptimState opt = init_optim_state(params);
  OptimConfig cfg;
  for (auto _ : state) adam_step(params, grads, opt, cfg);
}
BENCHMARK(BM_adam_step);

}  // namespace

BENCHMARK_MAIN();
