#include <benchmark/benchmark.h>

#include <random>

#include "maso/analysis.hpp"
#include "maso/learn.hpp"
#include "maso/maso.hpp"
#include "maso/splinefit.hpp"
#include "maso/toydata.hpp"

using namespace maso;

namespace {

Vec normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  Vec v(n);
  for (double& x : v) x = d(gen);
  return v;
}

Network small_cnn() {
  Network net;
  net.input_shape = {1, 16, 16};
  net.class_count = 10;
  Conv c;
  c.filters = Tensor({8, 1, 3, 3}, normals(72, 1));
  c.bias = Vec(8, 0.0);
  c.padding = Padding::same_zero;
  net.layers.emplace_back(c);
  net.layers.emplace_back(Activation{});
  net.layers.emplace_back(spatial_max_pool({8, 16, 16}, 2, 2));
  net.layers.emplace_back(Dense{Matrix(10, 512, normals(5120, 2)), Vec(10, 0.0)});
  return net;
}

}  // namespace

static void BM_ForwardHard(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  const MasoParams p(K, 4, 64, normals(K * 4 * 64, 1), normals(K * 4, 2));
  const Vec z = normals(64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(forward_hard(p, z));
}
BENCHMARK(BM_ForwardHard)->Arg(16)->Arg(256);

static void BM_NetworkForward(benchmark::State& state) {
  const Network net = small_cnn();
  const Vec x = normals(256, 4);
  for (auto _ : state) benchmark::DoNotOptimize(network_forward(net, x));
}
BENCHMARK(BM_NetworkForward);

static void BM_Decompose(benchmark::State& state) {
  const Network net = small_cnn();
  const Vec x = normals(256, 5);
  for (auto _ : state) benchmark::DoNotOptimize(decompose(net, x));
}
BENCHMARK(BM_Decompose)->Unit(benchmark::kMillisecond);

static void BM_Backward(benchmark::State& state) {
  const Network net = small_cnn();
  const Vec x = normals(256, 6);
  for (auto _ : state) benchmark::DoNotOptimize(backward(net, x, 3, Inference::soft()));
}
BENCHMARK(BM_Backward);

static void BM_ToyEpoch(benchmark::State& state) {
  ToyConfig cfg;
  cfg.per_class = 1000;
  const Dataset data = generate_toy_dataset(1, cfg);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 64;
  tc.adam.learning_rate = 1e-2;
  const Network init = toy_network(2);
  for (auto _ : state) benchmark::DoNotOptimize(train(init, data, tc));
}
BENCHMARK(BM_ToyEpoch)->Unit(benchmark::kMillisecond);

static void BM_SplineFit(benchmark::State& state) {
  const FitProblem p = grid_problem([](double x) { return x * x; }, -1, 1, 2001, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_max_affine(p));
}
BENCHMARK(BM_SplineFit)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
