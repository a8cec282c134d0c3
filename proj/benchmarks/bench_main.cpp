#include <benchmark/benchmark.h>

#include "nef/rng.hpp"
#include "nef/tensor.hpp"

static void BM_matmul(benchmark::State& state) {
  std::int64_t n = state.range(0);
  nef::CounterRng rng(1);
  nef::Tensor<float> a(n, n), b(n, n);
  for (auto& x : a.data) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto& x : b.data) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto _ : state) {
    auto c = nef::matmul_values(a, b);
    benchmark::DoNotOptimize(c.data.data());
  }
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
