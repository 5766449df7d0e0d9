#include <benchmark/benchmark.h>

#include "crashformer/encoders.hpp"
#include "crashformer/layers.hpp"
#include "crashformer/model.hpp"
#include "crashformer/random.hpp"

namespace {

using namespace crashformer;
using nn::Tensor;

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

void BM_FourierBlock(benchmark::State& state) {
  Rng rng(1);
  const auto L = static_cast<std::size_t>(state.range(0));
  nn::FourierBlock feb("feb", 64, L, L / 2 + 1, rng);
  const auto x = random_tensor({256, L, 64}, rng);
  for (auto _ : state) {
    auto y = feb.forward(x);
    benchmark::DoNotOptimize(feb.backward(y).data());
  }
}
BENCHMARK(BM_FourierBlock)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_LargeKernelAttention(benchmark::State& state) {
  Rng rng(2);
  model::LargeKernelAttention lka("lka", 16, rng);
  const auto s = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({8, 16, s, s}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(lka.forward(x).data());
}
BENCHMARK(BM_LargeKernelAttention)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ImageEncoder(benchmark::State& state) {
  Rng rng(3);
  model::ModelConfig cfg;
  cfg.img_size = static_cast<int>(state.range(0));
  model::ImageEncoder enc(cfg, rng);
  const auto s = static_cast<std::size_t>(cfg.img_size);
  const auto x = random_tensor({16, 3, s, s}, rng, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(enc.forward(x).data());
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ImageEncoder)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_CrashFormerStep(benchmark::State& state) {
  Rng rng(4);
  model::ModelConfig cfg;
  cfg.K = static_cast<int>(state.range(0));
  cfg.img_size = 64;
  model::CrashFormer net(cfg);
  const std::size_t B = 256, U = 32;
  model::Batch batch;
  batch.history = random_tensor({B, static_cast<std::size_t>(cfg.K), 27}, rng, 0.0, 1.0);
  batch.demo = random_tensor({B, 144}, rng);
  batch.images = random_tensor({U, 3, 64, 64}, rng, 0.0, 1.0);
  for (std::size_t i = 0; i < B; ++i) {
    batch.image_index.push_back(i % U);
    batch.labels.push_back(rng.uniform() < 0.1 ? 1 : 0);
  }
  for (auto _ : state) {
    net.zero_grad();
    const auto logits = net.forward(batch, true);
    const auto loss = model::weighted_ce(logits, batch.labels, {0.55, 5.0});
    net.backward(loss.dlogits);
    benchmark::DoNotOptimize(loss.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(B));
}
BENCHMARK(BM_CrashFormerStep)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
