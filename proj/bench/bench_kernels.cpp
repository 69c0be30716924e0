// Reference vs im2col convolution, and one training step over a batch
// (parallel over samples when OpenMP has more than one thread).

#include <benchmark/benchmark.h>

#include <random>

#include "wsod/dataset.hpp"
#include "wsod/layers.hpp"
#include "wsod/network.hpp"
#include "wsod/reference.hpp"
#include "wsod/trainer.hpp"

namespace {

wsod::Tensor random_tensor(const wsod::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  wsod::Tensor t(shape, 0.0);
  for (double& v : t.values()) v = u(rng);
  return t;
}

wsod::ConvParams random_conv(std::size_t out, std::size_t in) {
  wsod::ConvParams p{random_tensor({out, in, 3, 3}, 2), std::vector<double>(out, 0.1)};
  return p;
}

void BM_ConvForwardReference(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const wsod::Tensor x = random_tensor({c, 32, 32}, 1);
  const wsod::ConvParams p = random_conv(c, c);
  for (auto _ : state) benchmark::DoNotOptimize(wsod::reference::conv2d_forward(x, p, {1, 1}));
}

void BM_ConvForwardIm2col(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const wsod::Tensor x = random_tensor({c, 32, 32}, 1);
  const wsod::ConvParams p = random_conv(c, c);
  for (auto _ : state) benchmark::DoNotOptimize(wsod::conv2d_forward(x, p, {1, 1}));
}

void BM_ConvBackwardReference(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const wsod::Tensor x = random_tensor({c, 32, 32}, 1);
  const wsod::Tensor g = random_tensor({c, 32, 32}, 3);
  const wsod::ConvParams p = random_conv(c, c);
  for (auto _ : state) benchmark::DoNotOptimize(wsod::reference::conv2d_backward(x, p, g, {1, 1}));
}

void BM_ConvBackwardIm2col(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const wsod::Tensor x = random_tensor({c, 32, 32}, 1);
  const wsod::Tensor g = random_tensor({c, 32, 32}, 3);
  const wsod::ConvParams p = random_conv(c, c);
  for (auto _ : state) benchmark::DoNotOptimize(wsod::conv2d_backward(x, p, g, {1, 1}));
}

void BM_TrainStep(benchmark::State& state) {
  wsod::DatasetConfig dc;
  dc.train_images = 32;
  dc.eval_images = 1;
  const auto samples = wsod::generate_split(dc, "train");
  wsod::Network net = wsod::build_network({}, 1);
  const wsod::PyramidSpec spec = wsod::PyramidSpec::image_level(4);
  wsod::TrainingConfig tc;
  tc.batch_size = static_cast<int>(state.range(0));
  tc.iterations = 1;
  tc.warmup_iters = 0;
  wsod::Trainer trainer(net, tc, wsod::AugmentationConfig{},
                        wsod::fit_training_embedding(samples, spec));
  for (auto _ : state) benchmark::DoNotOptimize(trainer.run(samples));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_ConvForwardReference)->Arg(16)->Arg(32);
BENCHMARK(BM_ConvForwardIm2col)->Arg(16)->Arg(32);
BENCHMARK(BM_ConvBackwardReference)->Arg(16)->Arg(32);
BENCHMARK(BM_ConvBackwardIm2col)->Arg(16)->Arg(32);
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
