// Parallel kernels against the serial reference loops on layer-sized problems.

#include <benchmark/benchmark.h>

#include <vector>

#include "ptnet/kernels.hpp"
#include "ptnet/rng.hpp"

using namespace ptnet;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  Rng rng(seed);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

Tensor filled(Shape s, std::uint64_t seed) {
  Tensor t(std::move(s));
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

using GemmFn = void (*)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);

// m x k weights times k x n patches: a 3x3 conv with m outputs over a sqrt(n)^2 map.
template <GemmFn Fn>
void gemm_case(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1)),
             k = static_cast<std::size_t>(state.range(2));
  const auto a = filled(m * k, 1), b = filled(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    Fn(m, n, k, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * k));
}

template <Tensor (*Fn)(const Tensor&, const Tensor&, const Tensor&, const ConvGeometry&)>
void conv_forward_case(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), hw = static_cast<std::size_t>(state.range(1));
  const Tensor x = filled({1, c, hw, hw}, 3), w = filled({c, c, 3, 3}, 4), b = filled(Shape{c}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, w, b, {3, 1, 1}));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * c * c * 9 * hw * hw));
}

template <void (*Fn)(const Tensor&, const Tensor&, const Tensor&, const ConvGeometry&, Tensor*, Tensor*, Tensor*)>
void conv_backward_case(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), hw = static_cast<std::size_t>(state.range(1));
  const Tensor x = filled({1, c, hw, hw}, 6), w = filled({c, c, 3, 3}, 7), dy = filled({1, c, hw, hw}, 8);
  Tensor dx, dw, db;
  for (auto _ : state) {
    Fn(x, w, dy, {3, 1, 1}, &dx, &dw, &db);
    benchmark::DoNotOptimize(dx.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * c * c * 9 * hw * hw));
}

void gemm_args(benchmark::internal::Benchmark* b) {
  b->Args({32, 64 * 64, 288})->Args({32, 96 * 96, 288})->Args({8, 96 * 96, 72});
}

void conv_args(benchmark::internal::Benchmark* b) { b->Args({8, 96})->Args({32, 64}); }

}  // namespace

BENCHMARK(gemm_case<kernels::gemm>)->Name("gemm/parallel")->Apply(gemm_args);
BENCHMARK(gemm_case<reference::gemm>)->Name("gemm/reference")->Apply(gemm_args);
BENCHMARK(gemm_case<kernels::gemm_nt>)->Name("gemm_nt/parallel")->Apply(gemm_args);
BENCHMARK(gemm_case<reference::gemm_nt>)->Name("gemm_nt/reference")->Apply(gemm_args);
BENCHMARK(conv_forward_case<kernels::conv2d_forward>)->Name("conv_forward/parallel")->Apply(conv_args);
BENCHMARK(conv_forward_case<reference::conv2d_forward>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(conv_backward_case<kernels::conv2d_backward>)->Name("conv_backward/parallel")->Apply(conv_args);
BENCHMARK(conv_backward_case<reference::conv2d_backward>)->Name("conv_backward/reference")->Apply(conv_args);

BENCHMARK_MAIN();
