// Multiply, shift and adder convolutions on the same geometry, plus the
// GhostSA module and a full toy-network forward pass.

#include <benchmark/benchmark.h>

#include <random>

#include "gsan/adder.hpp"
#include "gsan/ghost_sa.hpp"
#include "gsan/network.hpp"
#include "gsan/ops.hpp"
#include "gsan/shift.hpp"
#include "gsan/training.hpp"

namespace {

using namespace gsan;

ConvGeometry geometry(const benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const int c = static_cast<int>(state.range(1));
  return {k, 1, k / 2, c, c, k == 3 ? c : 1};
}

Tensor4 input(const benchmark::State& state, std::mt19937_64& rng) {
  const int c = static_cast<int>(state.range(1));
  const int s = static_cast<int>(state.range(2));
  Tensor4 x({1, c, s, s});
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (float& v : x.data()) v = u(rng);
  return x;
}

void set_throughput(benchmark::State& state, const ConvGeometry& g) {
  const auto s = state.range(2);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.weight_count()) * s * s);
}

void BM_mul_conv(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const ConvGeometry g = geometry(state);
  const Tensor4 x = input(state, rng);
  std::vector<float> w(g.weight_count());
  std::normal_distribution<float> n(0.0f, 0.3f);
  for (float& v : w) v = n(rng);
  const std::vector<float> b(g.out_channels, 0.0f);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, g));
  set_throughput(state, g);
}

void BM_shift_conv(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const ConvGeometry g = geometry(state);
  const Tensor4 x = input(state, rng);
  const ShiftFilterBank bank(g, init_shift_proxies(g, {}, rng), {});
  for (auto _ : state) benchmark::DoNotOptimize(shift_conv2d(x, bank));
  set_throughput(state, g);
}

void BM_adder_conv(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const ConvGeometry g = geometry(state);
  const Tensor4 x = input(state, rng);
  const AdderFilterBank bank = AdderFilterBank::init(g, rng);
  for (auto _ : state) benchmark::DoNotOptimize(adder_conv2d(x, bank));
  set_throughput(state, g);
}

void kernel_args(benchmark::internal::Benchmark* b) {
  b->Args({3, 64, 56})->Args({1, 64, 56})->Args({3, 16, 28})->Args({1, 16, 28});
  b->ArgNames({"k", "c", "s"});
}

BENCHMARK(BM_mul_conv)->Apply(kernel_args);
BENCHMARK(BM_shift_conv)->Apply(kernel_args);
BENCHMARK(BM_adder_conv)->Apply(kernel_args);

void BM_ghost_sa_module(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const int gamma = static_cast<int>(state.range(0));
  const GhostSAModule m({32, 64, gamma, 1, 3, 1}, rng);
  Tensor4 x({8, 32, 14, 14});
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (float& v : x.data()) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(m.infer(x));
}
BENCHMARK(BM_ghost_sa_module)->DenseRange(2, 6)->ArgName("gamma");

void BM_toy_network_infer(benchmark::State& state) {
  const GhostSANet net(mnist_toy_spec(), 1);
  Tensor4 x({static_cast<int>(state.range(0)), 1, 28, 28}, 0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_toy_network_infer)->Arg(1)->Arg(64)->ArgName("batch");

}  // namespace

BENCHMARK_MAIN();
