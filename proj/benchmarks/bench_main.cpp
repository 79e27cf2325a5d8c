// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <numeric>
#include <span>
#include <vector>

#include "cen/exchange.hpp"
#include "cen/models.hpp"
#include "cen/ops.hpp"
#include "cen/random.hpp"
#include "cen/synthdata.hpp"
#include "cen/trainer.hpp"

namespace {

cen::Tensor<float> gaussian(cen::Shape shape, std::uint64_t seed, bool param = false) {
  cen::CounterRng rng(seed);
  std::vector<float> v(cen::shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(0.1 * rng.normal());
  return param ? cen::Tensor<float>::parameter(shape, v) : cen::Tensor<float>::from(shape, v);
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = gaussian({8, c, 32, 32}, 1);
  const auto w = gaussian({c, c, 3, 3}, 2);
  const auto b = gaussian({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(cen::conv2d(x, w, b, {1, 1}));
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = gaussian({8, c, 32, 32}, 1, true);
  const auto w = gaussian({c, c, 3, 3}, 2, true);
  const auto b = gaussian({c}, 3, true);
  for (auto _ : state) {
    auto y = cen::sum_all(cen::conv2d(x, w, b, {1, 1}));
    cen::backward(y);
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(8)->Arg(16)->Arg(32);

void BM_ChannelExchange(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const std::size_t c = 24;
  std::vector<cen::Tensor<float>> maps;
  std::vector<std::vector<float>> gammas(m, std::vector<float>(c));
  cen::CounterRng rng(7);
  for (std::size_t s = 0; s < m; ++s) {
    maps.push_back(gaussian({8, c, 16, 16}, 10 + s));
    for (auto& g : gammas[s]) g = static_cast<float>(0.02 * rng.normal());
  }
  std::vector<std::span<const float>> views(gammas.begin(), gammas.end());
  const auto plan = cen::make_plan(m, 0.01, {0});
  for (auto _ : state) {
    const auto mask = cen::compute_exchange_mask<float>(views, plan);
    benchmark::DoNotOptimize(cen::channel_exchange<float>(maps, mask));
  }
}
BENCHMARK(BM_ChannelExchange)->Arg(2)->Arg(3)->Arg(4);

void BM_TrainStep(benchmark::State& state) {
  const auto data = cen::make_dataset(cen::TaskKind::fusion_regression, 16, 1, 1);
  auto model = cen::build_model<float>({}, cen::Topology::multimodal, data.modalities.size(), 1,
                                      cen::task_specs(data));
  cen::Trainer<float> trainer(model, {});
  std::vector<std::size_t> idx(8);
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = cen::make_batch<float>(data, cen::Split::train, idx);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
