// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks for the hot paths of the streaming-adaptation stack:
// raw matmul, plain inference, one full sharpness-aware adaptation step,
// and the corruption operator. Run-width build.
#include <benchmark/benchmark.h>

#include "vct/engine.hpp"
#include "vct/rng.hpp"
#include "vct/stream.hpp"
#include "vct/vit.hpp"

namespace {

using namespace vct;

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double stddev = 1.0) {
  Rng rng(derive_seed(seed, "bench"));
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = static_cast<Real>(rng.normal(0.0, stddev));
  return t;
}

const ViTModel& bench_model() {
  static const ViTModel model = init_model(ViTConfig{}, 0);
  return model;
}

Tensor bench_images(int batch) {
  Rng rng(derive_seed(1, "bench_images"));
  const ViTConfig& cfg = bench_model().cfg;
  Tensor images({batch, cfg.channels, cfg.image_size, cfg.image_size});
  for (auto& v : images.vec()) v = static_cast<Real>(rng.uniform(0.0, 1.0));
  return images;
}

void BM_matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor a = random_tensor({n, n}, 2);
  const Tensor b = random_tensor({n, n}, 3);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(256);

void BM_forward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const ViTModel& model = bench_model();
  const Tensor images = bench_images(batch);
  TokenState tokens = init_token_state(model);
  ensure_instance_rows(tokens, batch, false);
  const Tensor composed = compose_tokens(tokens);
  for (auto _ : state) {
    Tensor logits = forward(model, images, composed);
    benchmark::DoNotOptimize(logits.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * batch);
}
BENCHMARK(BM_forward)->Arg(1)->Arg(64);

// One streaming step in the default adaptation mode: two traced passes
// for the sharpness-aware gradient, the parameter update, and the
// prediction forward. The model copy resets every iteration so each
// sample measures the same step.
void BM_adapt_batch(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const Tensor images = bench_images(batch);
  const AdaptConfig cfg;
  for (auto _ : state) {
    state.PauseTiming();
    ViTModel work = bench_model();
    TokenState tokens = init_token_state(work);
    state.ResumeTiming();
    BatchResult r = adapt_batch(work, tokens, images, cfg);
    benchmark::DoNotOptimize(r.loss);
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * batch);
}
BENCHMARK(BM_adapt_batch)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_corrupt(benchmark::State& state) {
  const Tensor images = bench_images(64);
  Corruption c;
  c.kind = CorruptionKind::gaussian_noise;
  c.severity = 4;
  for (auto _ : state) {
    Tensor out = corrupt(images, c);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * 64);
}
BENCHMARK(BM_corrupt);

}  // namespace

BENCHMARK_MAIN();
